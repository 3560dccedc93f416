"""Finite filtered lattice with a Meyer-style information structure.

Time is a finite chain of instants.  Each epoch k in {0..K} contributes a
grid instant (k, AT) and an interval instant (k, INT) standing for the whole
open interval after the grid point; TERMINAL sits after everything and plays
the role of infinity.  Left and right limits of ladlag processes are then
attained at neighbouring instants, and stopping "just before" or "just
after" a grid point is representable exactly.

Information is one partition of the path set per instant:

    instant    LAMBDA   OPTIONAL   PREDICTABLE
    (k, AT)    G_k      F_k        F_{k-1}   (F_{0-} at k = 0)
    (k, INT)   F_k      F_k        F_k

where F is the filtration and G is the Meyer structure squeezed between
F_{k-1} and F_k.  All values are exact rationals; there is no floating
point anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

AT = "AT"
INT = "INT"


class Kind(Enum):
    """Which information structure governs a measurability question."""

    LAMBDA = "lambda"
    OPTIONAL = "optional"
    PREDICTABLE = "predictable"


class LatticeError(ValueError):
    """An operation was applied to structurally unusable input."""


@dataclass(frozen=True)
class Instant:
    """A point of the time chain: grid point (epoch, AT) or interval (epoch, INT)."""

    epoch: int
    tag: str

    def __post_init__(self) -> None:
        if self.tag not in (AT, INT):
            raise LatticeError(f"instant tag must be AT or INT, got {self.tag!r}")
        if self.epoch < 0:
            raise LatticeError(f"instant epoch must be >= 0, got {self.epoch}")

    @property
    def is_at(self) -> bool:
        return self.tag == AT

    @property
    def index(self) -> int:
        """Position in the total instant order, 2*epoch for AT, +1 for INT."""
        return 2 * self.epoch + (0 if self.tag == AT else 1)

    def _key(self) -> tuple[int, int]:
        return (0, self.index)

    def __lt__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return self._key() < other._key()
        return NotImplemented

    def __le__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return self._key() <= other._key()
        return NotImplemented

    def __gt__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return self._key() > other._key()
        return NotImplemented

    def __ge__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return self._key() >= other._key()
        return NotImplemented

    def __repr__(self) -> str:
        return f"({self.epoch},{self.tag})"


class _Terminal:
    """The distinguished instant after every epoch (the time-infinity slot)."""

    _instance: "_Terminal | None" = None

    def __new__(cls) -> "_Terminal":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def _key(self) -> tuple[int, int]:
        return (1, 0)

    def __lt__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return False
        return NotImplemented

    def __le__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return other is self
        return NotImplemented

    def __gt__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return other is not self
        return NotImplemented

    def __ge__(self, other: object) -> bool:
        if isinstance(other, (Instant, _Terminal)):
            return True
        return NotImplemented

    def __repr__(self) -> str:
        return "TERMINAL"


TERMINAL = _Terminal()

TimePoint = Instant | _Terminal

# Partitions are canonically ordered tuples of frozensets of path indices.
Partition = tuple[frozenset[int], ...]


def make_partition(blocks: Iterable[Iterable[int]]) -> Partition:
    """Canonicalize a collection of blocks (sorted by smallest member)."""
    frozen = [frozenset(b) for b in blocks]
    return tuple(sorted(frozen, key=lambda b: min(b) if b else -1))


def is_partition(partition: Partition, n_paths: int) -> bool:
    seen: set[int] = set()
    for block in partition:
        if not block:
            return False
        if block & seen:
            return False
        seen |= block
    return seen == set(range(n_paths))


def refines(finer: Partition, coarser: Partition) -> bool:
    """True iff every block of `finer` is contained in one block of `coarser`."""
    lookup: dict[int, frozenset[int]] = {}
    for block in coarser:
        for i in block:
            lookup[i] = block
    for block in finer:
        targets = {lookup.get(i) for i in block}
        if len(targets) != 1 or None in targets:
            return False
    return True


def atom_of(partition: Partition, path: int) -> frozenset[int]:
    for block in partition:
        if path in block:
            return block
    raise LatticeError(f"path {path} not covered by partition")


def is_union_of_atoms(subset: frozenset[int], partition: Partition) -> bool:
    rest = set(subset)
    for block in partition:
        if block <= subset:
            rest -= block
        elif block & subset:
            return False
    return not rest


@dataclass(frozen=True)
class PathRecord:
    id: str
    probability: Fraction


@dataclass(frozen=True)
class FilteredLattice:
    """Finite path space with epoch-indexed partitions of the path set.

    `epoch_count` is the last epoch index K; `filtration` holds F_0..F_K;
    `initial_field` is F_{0-} and defaults to the trivial partition.
    """

    epoch_count: int
    paths: tuple[PathRecord, ...]
    filtration: tuple[Partition, ...]
    initial_field: Partition | None = None

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def n_instants(self) -> int:
        return 2 * (self.epoch_count + 1)

    @property
    def probabilities(self) -> tuple[Fraction, ...]:
        return tuple(p.probability for p in self.paths)

    @property
    def path_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.paths)

    def initial_partition(self) -> Partition:
        if self.initial_field is not None:
            return self.initial_field
        return make_partition([range(self.n_paths)])

    def instants(self) -> list[Instant]:
        return [
            Instant(k, tag)
            for k in range(self.epoch_count + 1)
            for tag in (AT, INT)
        ]

    def instant_at(self, index: int) -> Instant:
        return Instant(index // 2, AT if index % 2 == 0 else INT)


@dataclass(frozen=True)
class MeyerStructure:
    """Per-epoch partitions G_k with F_{k-1} coarser than G_k coarser than F_k."""

    meyer_fields: tuple[Partition, ...]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    problems: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def validate_lattice(lattice: FilteredLattice, meyer: MeyerStructure) -> ValidationReport:
    """Check every structural invariant; each violation becomes one message."""
    problems: list[str] = []
    n = lattice.n_paths
    if lattice.epoch_count < 1:
        problems.append(f"epoch_count must be positive, got {lattice.epoch_count}")
    ids = [p.id for p in lattice.paths]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        problems.append(f"duplicate path ids: {dupes}")
    for rec in lattice.paths:
        if rec.probability <= 0:
            problems.append(f"path {rec.id!r} has non-positive probability {rec.probability}")
    total = sum((p.probability for p in lattice.paths), Fraction(0))
    if total != 1:
        problems.append(f"probabilities sum to {total}")

    if len(lattice.filtration) != lattice.epoch_count + 1:
        problems.append(
            f"filtration must have {lattice.epoch_count + 1} partitions, "
            f"got {len(lattice.filtration)}"
        )
    named: list[tuple[str, Partition]] = [
        (f"F_{k}", part) for k, part in enumerate(lattice.filtration)
    ]
    named.append(("F_0-", lattice.initial_partition()))
    if len(meyer.meyer_fields) != lattice.epoch_count + 1:
        problems.append(
            f"meyer structure must have {lattice.epoch_count + 1} partitions, "
            f"got {len(meyer.meyer_fields)}"
        )
    named.extend((f"G_{k}", part) for k, part in enumerate(meyer.meyer_fields))
    for name, part in named:
        if not is_partition(part, n):
            problems.append(f"{name} is not a partition of the path set")

    def check_refines(fname: str, finer: Partition, cname: str, coarser: Partition) -> None:
        if not refines(finer, coarser):
            bad = [
                sorted(block)
                for block in finer
                if not any(block <= c for c in coarser)
            ]
            problems.append(f"{fname} does not refine {cname} (offending atoms {bad})")

    if not problems:
        check_refines("F_0", lattice.filtration[0], "F_0-", lattice.initial_partition())
        for k in range(1, lattice.epoch_count + 1):
            check_refines(f"F_{k}", lattice.filtration[k], f"F_{k-1}", lattice.filtration[k - 1])
        for k in range(lattice.epoch_count + 1):
            below = lattice.initial_partition() if k == 0 else lattice.filtration[k - 1]
            below_name = "F_0-" if k == 0 else f"F_{k-1}"
            check_refines(f"G_{k}", meyer.meyer_fields[k], below_name, below)
            check_refines(f"F_{k}", lattice.filtration[k], f"G_{k}", meyer.meyer_fields[k])
    return ValidationReport(ok=not problems, problems=tuple(problems))


def sigma_field_at(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    u: TimePoint,
    kind: Kind,
) -> Partition:
    """The information partition governing instant `u` under `kind`."""
    if u is TERMINAL or isinstance(u, _Terminal):
        raise LatticeError("sigma_field_at is undefined at TERMINAL")
    assert isinstance(u, Instant)
    if u.epoch > lattice.epoch_count:
        raise LatticeError(f"instant {u} beyond epoch_count {lattice.epoch_count}")
    if u.tag == INT:
        return lattice.filtration[u.epoch]
    if kind is Kind.LAMBDA:
        return meyer.meyer_fields[u.epoch]
    if kind is Kind.OPTIONAL:
        return lattice.filtration[u.epoch]
    if u.epoch == 0:
        return lattice.initial_partition()
    return lattice.filtration[u.epoch - 1]


def field_partitions(
    lattice: FilteredLattice, meyer: MeyerStructure, kind: Kind
) -> list[Partition]:
    """Partition per instant index, in instant order."""
    return [sigma_field_at(lattice, meyer, u, kind) for u in lattice.instants()]


def conditional_expectation(
    lattice: FilteredLattice,
    rv: Sequence[Fraction],
    partition: Partition,
) -> tuple[Fraction, ...]:
    """Probability-weighted average per atom, exact and constant on atoms."""
    if len(rv) != lattice.n_paths:
        raise LatticeError("random variable length does not match path count")
    probs = lattice.probabilities
    out: list[Fraction] = [Fraction(0)] * lattice.n_paths
    covered = 0
    for block in partition:
        mass = sum((probs[i] for i in block), Fraction(0))
        avg = sum((probs[i] * rv[i] for i in block), Fraction(0)) / mass
        for i in block:
            out[i] = avg
        covered += len(block)
    if covered != lattice.n_paths:
        raise LatticeError("partition does not cover the path set")
    return tuple(out)


@dataclass(frozen=True)
class LatticeProcess:
    """A ladlag process: one value per (path, instant) plus a terminal slice.

    The terminal slice defaults to zero on every path (the usual convention
    for rewards); decompositions and closed martingales carry genuine
    terminal values.
    """

    values: tuple[tuple[Fraction, ...], ...]
    terminal: tuple[Fraction, ...]

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Sequence[Fraction | int]],
        terminal: Sequence[Fraction | int] | None = None,
    ) -> "LatticeProcess":
        vals = tuple(tuple(Fraction(v) for v in row) for row in rows)
        if len({len(row) for row in vals}) > 1:
            raise LatticeError("all paths must carry the same number of instants")
        if terminal is None:
            term = tuple(Fraction(0) for _ in vals)
        else:
            term = tuple(Fraction(v) for v in terminal)
        if len(term) != len(vals):
            raise LatticeError("terminal slice length must match the path count")
        return cls(values=vals, terminal=term)

    @classmethod
    def constant(cls, lattice: FilteredLattice, value: Fraction | int) -> "LatticeProcess":
        v = Fraction(value)
        row = tuple(v for _ in range(lattice.n_instants))
        return cls(
            values=tuple(row for _ in range(lattice.n_paths)),
            terminal=tuple(v for _ in range(lattice.n_paths)),
        )

    @property
    def n_paths(self) -> int:
        return len(self.values)

    @property
    def n_instants(self) -> int:
        return len(self.values[0]) if self.values else 0

    def at(self, path: int, u: TimePoint) -> Fraction:
        if isinstance(u, _Terminal):
            return self.terminal[path]
        return self.values[path][u.index]

    def slice_at(self, index: int) -> tuple[Fraction, ...]:
        return tuple(row[index] for row in self.values)


@dataclass(frozen=True)
class RandomInstant:
    """A per-path instant-or-TERMINAL; the raw material of stopping times."""

    assignment: tuple[TimePoint, ...]

    @classmethod
    def constant(cls, lattice: FilteredLattice, u: TimePoint) -> "RandomInstant":
        return cls(assignment=tuple(u for _ in range(lattice.n_paths)))

    @classmethod
    def from_indices(cls, lattice: FilteredLattice, indices: Sequence[int]) -> "RandomInstant":
        n = lattice.n_instants
        return cls(
            assignment=tuple(
                TERMINAL if i >= n else lattice.instant_at(i) for i in indices
            )
        )

    def indices(self, lattice: FilteredLattice) -> tuple[int, ...]:
        """Instant indices with n_instants standing for TERMINAL."""
        n = lattice.n_instants
        return tuple(
            n if isinstance(u, _Terminal) else u.index for u in self.assignment
        )

    def __le__(self, other: "RandomInstant") -> bool:
        return all(a <= b for a, b in zip(self.assignment, other.assignment))

    def value_of(self, process: LatticeProcess) -> tuple[Fraction, ...]:
        """The per-path reading of `process` at this random instant."""
        return tuple(process.at(i, u) for i, u in enumerate(self.assignment))


def is_measurable(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
    kind: Kind,
) -> bool:
    """True iff every instant slice is constant on the atoms of its field.

    The terminal slice must be constant on the atoms of F_K, the terminal
    information.
    """
    fields = field_partitions(lattice, meyer, kind)
    for idx, part in enumerate(fields):
        column = [process.values[p][idx] for p in range(lattice.n_paths)]
        for block in part:
            vals = {column[i] for i in block}
            if len(vals) > 1:
                return False
    for block in lattice.filtration[-1]:
        if len({process.terminal[i] for i in block}) > 1:
            return False
    return True


def is_lambda_stopping_time(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    T: RandomInstant,
    kind: Kind = Kind.LAMBDA,
) -> bool:
    """True iff {T <= u} is a union of atoms of the instant-u field, for all u."""
    idx = T.indices(lattice)
    fields = field_partitions(lattice, meyer, kind)
    for i, part in enumerate(fields):
        event = frozenset(p for p in range(lattice.n_paths) if idx[p] <= i)
        if not is_union_of_atoms(event, part):
            return False
    return True


def restrict_time(T: RandomInstant, H: frozenset[int] | set[int]) -> RandomInstant:
    """T on H, TERMINAL off H (the classical T_H)."""
    return RandomInstant(
        assignment=tuple(
            u if p in H else TERMINAL for p, u in enumerate(T.assignment)
        )
    )


def field_at_time(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    T: RandomInstant,
    kind: Kind,
) -> Partition:
    """Partition generated by Z_T over kind-measurable Z.

    Paths first split by the value of T; within {T = u} they split by the
    instant-u field, and within {T = TERMINAL} by the terminal field F_K.
    """
    groups: dict[tuple[int, frozenset[int]], set[int]] = {}
    for p, u in enumerate(T.assignment):
        if isinstance(u, _Terminal):
            key = (lattice.n_instants, atom_of(lattice.filtration[-1], p))
        else:
            part = sigma_field_at(lattice, meyer, u, kind)
            key = (u.index, atom_of(part, p))
        groups.setdefault(key, set()).add(p)
    return make_partition(groups.values())


def section_witness(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    B: Iterable[tuple[int, Instant]],
) -> RandomInstant:
    """Earliest-instant section of a measurable set of (path, instant) pairs.

    Returns a stopping time S with graph(S) inside B and P(S < TERMINAL)
    equal to the probability of B's path projection; on a finite lattice the
    section theorem needs no epsilon.
    """
    pairs = list(B)
    slices: dict[int, set[int]] = {}
    for p, u in pairs:
        if isinstance(u, _Terminal):
            raise LatticeError("section sets live on Omega x [0, infinity)")
        slices.setdefault(u.index, set()).add(p)
    fields = field_partitions(lattice, meyer, Kind.LAMBDA)
    for idx, paths in slices.items():
        if not is_union_of_atoms(frozenset(paths), fields[idx]):
            raise LatticeError(f"not a Lambda-set: slice at index {idx} is not a union of atoms")
    best: list[TimePoint] = [TERMINAL] * lattice.n_paths
    for idx in sorted(slices):
        for p in slices[idx]:
            if isinstance(best[p], _Terminal):
                best[p] = lattice.instant_at(idx)
    return RandomInstant(assignment=tuple(best))


@dataclass(frozen=True)
class DividedQuadruple:
    """A stop split into just-before / at / just-after parts.

    `T` takes grid (AT) values or TERMINAL; `w_minus`, `w`, `w_plus`
    partition the path set and select the left-limit, on-time, and
    right-limit readings respectively.
    """

    T: RandomInstant
    w_minus: frozenset[int]
    w: frozenset[int]
    w_plus: frozenset[int]


def to_divided_quadruple(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    T: RandomInstant,
) -> DividedQuadruple:
    """Canonical quadruple form of an instant-valued stopping time.

    Grid stops go to `w`, interval stops become just-after stops of their
    grid point (`w_plus`), TERMINAL goes to `w`; `w_minus` is always empty
    because entry times on a finite lattice are attained.
    """
    if not is_lambda_stopping_time(lattice, meyer, T, Kind.LAMBDA):
        raise LatticeError("to_divided_quadruple expects a Lambda-stopping time")
    at_values: list[TimePoint] = []
    w: set[int] = set()
    w_plus: set[int] = set()
    for p, u in enumerate(T.assignment):
        if isinstance(u, _Terminal):
            at_values.append(TERMINAL)
            w.add(p)
        elif u.tag == AT:
            at_values.append(u)
            w.add(p)
        else:
            at_values.append(Instant(u.epoch, AT))
            w_plus.add(p)
    return DividedQuadruple(
        T=RandomInstant(assignment=tuple(at_values)),
        w_minus=frozenset(),
        w=frozenset(w),
        w_plus=frozenset(w_plus),
    )


def from_divided_quadruple(lattice: FilteredLattice, q: DividedQuadruple) -> RandomInstant:
    """Instant form of a quadruple: w_minus at epoch k reads (k-1, INT),
    w reads (k, AT), w_plus reads (k, INT); at TERMINAL, w_minus reads the
    last interval and w reads TERMINAL."""
    out: list[TimePoint] = []
    for p, u in enumerate(q.T.assignment):
        if p in q.w_minus:
            if isinstance(u, _Terminal):
                out.append(Instant(lattice.epoch_count, INT))
            elif u.epoch == 0:
                raise LatticeError("w_minus may not contain a path stopped at epoch 0")
            else:
                out.append(Instant(u.epoch - 1, INT))
        elif p in q.w_plus:
            if isinstance(u, _Terminal):
                raise LatticeError("w_plus may not contain a TERMINAL path")
            out.append(Instant(u.epoch, INT))
        else:
            out.append(u)
    return RandomInstant(assignment=tuple(out))


def divided_value(
    lattice: FilteredLattice, process: LatticeProcess, q: DividedQuadruple
) -> tuple[Fraction, ...]:
    """Per-path reading of a process at a divided stop (left / at / right)."""
    return from_divided_quadruple(lattice, q).value_of(process)


def validate_divided(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    q: DividedQuadruple,
) -> ValidationReport:
    """Check the five defining clauses of a divided stopping time."""
    problems: list[str] = []
    n = lattice.n_paths
    all_paths = frozenset(range(n))
    if (
        q.w_minus | q.w | q.w_plus != all_paths
        or q.w_minus & q.w
        or q.w_minus & q.w_plus
        or q.w & q.w_plus
    ):
        problems.append("w_minus, w, w_plus do not partition the path set")
    for p, u in enumerate(q.T.assignment):
        if isinstance(u, Instant) and u.tag != AT:
            problems.append(f"T takes the interval value {u} on path {p}")
    if not is_lambda_stopping_time(lattice, meyer, q.T, Kind.OPTIONAL):
        problems.append("T is not an optional stopping time")
    if problems:
        return ValidationReport(ok=False, problems=tuple(problems))

    zero = Instant(0, AT)
    pred_field = field_at_time(lattice, meyer, q.T, Kind.PREDICTABLE)
    lam_field = field_at_time(lattice, meyer, q.T, Kind.LAMBDA)
    opt_field = field_at_time(lattice, meyer, q.T, Kind.OPTIONAL)
    if any(q.T.assignment[p] == zero for p in q.w_minus):
        problems.append("(i) w_minus contains a path with T at epoch 0")
    if not is_union_of_atoms(q.w_minus, pred_field):
        problems.append("(i) w_minus is not measurable for the predictable field at T")
    if not is_union_of_atoms(q.w, lam_field):
        problems.append("(ii) w is not measurable for the Lambda field at T")
    if any(isinstance(q.T.assignment[p], _Terminal) for p in q.w_plus):
        problems.append("(iii) w_plus contains a path with T = TERMINAL")
    if not is_union_of_atoms(q.w_plus, opt_field):
        problems.append("(iii) w_plus is not measurable for the optional field at T")
    if not is_lambda_stopping_time(lattice, meyer, restrict_time(q.T, q.w_minus), Kind.PREDICTABLE):
        problems.append("(iv) T restricted to w_minus is not a predictable stopping time")
    if not is_lambda_stopping_time(lattice, meyer, restrict_time(q.T, q.w), Kind.LAMBDA):
        problems.append("(v) T restricted to w is not a Lambda-stopping time")
    return ValidationReport(ok=not problems, problems=tuple(problems))
