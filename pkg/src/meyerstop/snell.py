"""Snell envelopes, compensator decomposition, and optimal divided stops.

The envelope is a backward recursion over the instant chain; everything it
claims is verified against `snell_brute_force`, which enumerates every
stopping time outright.  The decomposition splits the envelope's
supermartingale losses into a predictable part A (jumps into grid points,
plus a final jump at TERMINAL when the last interval value is positive) and
an on-time part B (jumps at grid points); both drive the second optimal
stop construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .enumeration import (
    DEFAULT_GUARD,
    iter_stopping_index_tuples,
    maximize_over_stopping_times,
)
from .lattice import (
    AT,
    DividedQuadruple,
    FilteredLattice,
    Instant,
    Kind,
    LatticeError,
    LatticeProcess,
    MeyerStructure,
    RandomInstant,
    TERMINAL,
    TimePoint,
    _Terminal,
    conditional_expectation,
    field_partitions,
    is_lambda_stopping_time,
    is_measurable,
    to_divided_quadruple,
)
from .projection import require_reward


def expected_value(lattice: FilteredLattice, rv) -> Fraction:
    return sum(
        (p.probability * v for p, v in zip(lattice.paths, rv)), Fraction(0)
    )


def snell_envelope(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
) -> LatticeProcess:
    """Smallest supermartingale dominating the reward, by backward recursion.

    At the last interval the envelope is max(Z, 0); at a grid point the
    continuation is conditioned on G_k, inside an interval on F_k.
    """
    require_reward(lattice, meyer, process)
    n = lattice.n_instants
    fields = field_partitions(lattice, meyer, Kind.LAMBDA)
    zero = tuple(Fraction(0) for _ in range(lattice.n_paths))
    columns: list[tuple[Fraction, ...]] = [zero] * n
    nxt = zero  # continuation from TERMINAL, where the envelope is 0
    for idx in range(n - 1, -1, -1):
        cont = conditional_expectation(lattice, nxt, fields[idx])
        col = tuple(
            max(process.values[p][idx], cont[p]) for p in range(lattice.n_paths)
        )
        columns[idx] = col
        nxt = col
    values = tuple(
        tuple(columns[idx][p] for idx in range(n)) for p in range(lattice.n_paths)
    )
    return LatticeProcess(values=values, terminal=zero)


@dataclass(frozen=True)
class BruteForceResult:
    value: Fraction
    optimizers: tuple[RandomInstant, ...]


def snell_brute_force(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
    guard: int | None = DEFAULT_GUARD,
) -> BruteForceResult:
    """Maximize E[Z_T] by enumerating every Lambda-stopping time."""
    require_reward(lattice, meyer, process)
    probs = lattice.probabilities
    weights = [
        [probs[p] * v for v in process.values[p]] for p in range(lattice.n_paths)
    ]
    terminal = [probs[p] * process.terminal[p] for p in range(lattice.n_paths)]
    value, argmax = maximize_over_stopping_times(
        lattice, meyer, weights, terminal, Kind.LAMBDA, guard=guard
    )
    return BruteForceResult(
        value=value,
        optimizers=tuple(RandomInstant.from_indices(lattice, t) for t in argmax),
    )


def _require_lambda(lattice, meyer, process) -> None:
    if not is_measurable(lattice, meyer, process, Kind.LAMBDA):
        raise LatticeError("process is not Lambda-measurable")


def is_lambda_supermartingale(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
) -> bool:
    """Each instant value dominates its conditional continuation, including
    the step into TERMINAL."""
    return _martingale_check(lattice, meyer, process, strict_equality=False)


def is_lambda_martingale(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
) -> bool:
    return _martingale_check(lattice, meyer, process, strict_equality=True)


def _martingale_check(lattice, meyer, process, strict_equality: bool) -> bool:
    _require_lambda(lattice, meyer, process)
    n = lattice.n_instants
    fields = field_partitions(lattice, meyer, Kind.LAMBDA)
    for idx in range(n):
        nxt = (
            process.terminal if idx == n - 1 else process.slice_at(idx + 1)
        )
        cont = conditional_expectation(lattice, nxt, fields[idx])
        for p in range(lattice.n_paths):
            here = process.values[p][idx]
            if strict_equality:
                if here != cont[p]:
                    return False
            elif here < cont[p]:
                return False
    return True


@dataclass(frozen=True)
class MertensDecomposition:
    """Envelope = M - A - B_shifted, with per-epoch jump slices retained.

    `delta_a[k]` and `delta_b[k]` are the per-path jumps at (k, AT);
    `a_terminal_jump` is the extra predictable jump at TERMINAL equal to
    the last interval value of the envelope.  `b_shifted` is the left-limit
    reading of B (value at the predecessor instant).
    """

    m: LatticeProcess
    a: LatticeProcess
    b: LatticeProcess
    b_shifted: LatticeProcess
    delta_a: tuple[tuple[Fraction, ...], ...]
    delta_b: tuple[tuple[Fraction, ...], ...]
    a_terminal_jump: tuple[Fraction, ...]


def mertens_decompose(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    zbar: LatticeProcess,
) -> MertensDecomposition:
    """Split a nonnegative supermartingale with terminal 0 into M - A - B_-.

    Jump formulas, per grid point:
        delta A at (k,AT) = Zbar at (k-1,INT) - E[Zbar at (k,AT) | F_{k-1}]
        delta B at (k,AT) = Zbar at (k,AT)    - E[Zbar at (k,INT) | G_k]
    with delta A at (0,AT) = 0 and a final predictable jump of A at TERMINAL
    equal to Zbar at (K,INT).  M = Zbar + A + B_- is then a Lambda-martingale.
    """
    if not is_lambda_supermartingale(lattice, meyer, zbar):
        raise LatticeError("input is not a Lambda-supermartingale")
    if any(v < 0 for row in zbar.values for v in row) or any(
        t != 0 for t in zbar.terminal
    ):
        raise LatticeError("decomposition expects a nonnegative input with terminal 0")
    n_paths = lattice.n_paths
    K = lattice.epoch_count

    delta_a: list[tuple[Fraction, ...]] = []
    delta_b: list[tuple[Fraction, ...]] = []
    for k in range(K + 1):
        at_idx = Instant(k, AT).index
        int_idx = at_idx + 1
        g_k = meyer.meyer_fields[k]
        cont_b = conditional_expectation(lattice, zbar.slice_at(int_idx), g_k)
        db = tuple(zbar.values[p][at_idx] - cont_b[p] for p in range(n_paths))
        if any(v < 0 for v in db):
            raise LatticeError("negative B-jump: input violates the supermartingale property")
        delta_b.append(db)
        if k == 0:
            delta_a.append(tuple(Fraction(0) for _ in range(n_paths)))
        else:
            f_prev = lattice.filtration[k - 1]
            pred = conditional_expectation(lattice, zbar.slice_at(at_idx), f_prev)
            da = tuple(
                zbar.values[p][at_idx - 1] - pred[p] for p in range(n_paths)
            )
            if any(v < 0 for v in da):
                raise LatticeError(
                    "negative A-jump: input violates the supermartingale property"
                )
            delta_a.append(da)

    a_terminal_jump = zbar.slice_at(lattice.n_instants - 1)

    a_rows, b_rows, bs_rows, m_rows = [], [], [], []
    a_term, b_term, m_term = [], [], []
    for p in range(n_paths):
        cum_a = Fraction(0)
        cum_b = Fraction(0)
        a_row, b_row, bs_row, m_row = [], [], [], []
        for k in range(K + 1):
            before_b = cum_b
            cum_a += delta_a[k][p]
            cum_b += delta_b[k][p]
            # AT instant: A includes its jump, the B_- reading does not.
            a_row.extend((cum_a, cum_a))
            b_row.extend((cum_b, cum_b))
            bs_row.extend((before_b, cum_b))
            at_idx = 2 * k
            m_row.append(zbar.values[p][at_idx] + cum_a + before_b)
            m_row.append(zbar.values[p][at_idx + 1] + cum_a + cum_b)
        a_inf = cum_a + a_terminal_jump[p]
        a_term.append(a_inf)
        b_term.append(cum_b)
        m_term.append(a_inf + cum_b)
        a_rows.append(tuple(a_row))
        b_rows.append(tuple(b_row))
        bs_rows.append(tuple(bs_row))
        m_rows.append(tuple(m_row))

    decomp = MertensDecomposition(
        m=LatticeProcess(values=tuple(m_rows), terminal=tuple(m_term)),
        a=LatticeProcess(values=tuple(a_rows), terminal=tuple(a_term)),
        b=LatticeProcess(values=tuple(b_rows), terminal=tuple(b_term)),
        b_shifted=LatticeProcess(values=tuple(bs_rows), terminal=tuple(b_term)),
        delta_a=tuple(delta_a),
        delta_b=tuple(delta_b),
        a_terminal_jump=tuple(a_terminal_jump),
    )
    assert is_lambda_martingale(lattice, meyer, decomp.m), "decomposition lost the martingale"
    return decomp


def lambda_entry_time(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
    zbar: LatticeProcess,
    lam: Fraction,
    S: RandomInstant,
) -> RandomInstant:
    """First instant at or after S where lam * Zbar <= Z, per path."""
    if not (0 < lam < 1):
        raise LatticeError(f"lambda must lie in (0,1), got {lam}")
    n = lattice.n_instants
    lower = S.indices(lattice)
    out: list[TimePoint] = []
    for p in range(lattice.n_paths):
        hit: TimePoint = TERMINAL
        for idx in range(lower[p], n):
            if lam * zbar.values[p][idx] <= process.values[p][idx]:
                hit = lattice.instant_at(idx)
                break
        out.append(hit)
    return RandomInstant(assignment=tuple(out))


@dataclass(frozen=True)
class DeltaStop:
    T: RandomInstant
    quadruple: DividedQuadruple


def delta_stop(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
    S: RandomInstant,
    zbar: LatticeProcess | None = None,
) -> DeltaStop:
    """First instant at or after S where the envelope touches the reward.

    On a finite chain the lambda-entry times stabilize, so this is the
    stabilized limit directly; the touch always happens by the last
    interval, where the envelope equals the reward.
    """
    if zbar is None:
        zbar = snell_envelope(lattice, meyer, process)
    n = lattice.n_instants
    lower = S.indices(lattice)
    out: list[TimePoint] = []
    for p in range(lattice.n_paths):
        hit: TimePoint = TERMINAL
        for idx in range(lower[p], n):
            if zbar.values[p][idx] == process.values[p][idx]:
                hit = lattice.instant_at(idx)
                break
        out.append(hit)
    T = RandomInstant(assignment=tuple(out))
    return DeltaStop(T=T, quadruple=to_divided_quadruple(lattice, meyer, T))


@dataclass(frozen=True)
class SigmaStop:
    T: RandomInstant
    quadruple: DividedQuadruple
    k_minus: frozenset[int]
    k_on: frozenset[int]
    k_plus: frozenset[int]


def sigma_stop(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
    S: RandomInstant,
    zbar: LatticeProcess | None = None,
    decomp: MertensDecomposition | None = None,
) -> SigmaStop:
    """First time the compensators grow past their level at S.

    T is the first instant u >= S with A_u + B_u > A_S + B_{S-}; the
    terminal reading includes A's final jump.  K-sets follow the growth
    attribution: K_minus where A grew, K_on where only B grew, K_plus where
    nothing grew (possible only at TERMINAL, and relabeled into the on-time
    part so the quadruple stays a divided stopping time).
    """
    if zbar is None:
        zbar = snell_envelope(lattice, meyer, process)
    if decomp is None:
        decomp = mertens_decompose(lattice, meyer, zbar)
    n = lattice.n_instants
    lower = S.indices(lattice)
    a, b, bs = decomp.a, decomp.b, decomp.b_shifted

    t_vals: list[TimePoint] = []
    k_minus: set[int] = set()
    k_on: set[int] = set()
    k_plus: set[int] = set()
    w_on: set[int] = set()
    w_plus: set[int] = set()
    for p in range(lattice.n_paths):
        if lower[p] >= n:
            # S is already TERMINAL: nothing can grow afterwards.
            t_vals.append(TERMINAL)
            k_plus.add(p)
            w_on.add(p)
            continue
        base = a.values[p][lower[p]] + bs.values[p][lower[p]]
        a_at_s = a.values[p][lower[p]]
        b_minus_at_s = bs.values[p][lower[p]]
        hit: TimePoint = TERMINAL
        for idx in range(lower[p], n):
            if a.values[p][idx] + b.values[p][idx] > base:
                hit = lattice.instant_at(idx)
                break
        t_vals.append(hit)
        if isinstance(hit, _Terminal):
            a_at_t = a.terminal[p]
            b_at_t = b.terminal[p]
        else:
            a_at_t = a.values[p][hit.index]
            b_at_t = b.values[p][hit.index]
        if a_at_t > a_at_s:
            k_minus.add(p)
            continue
        if b_at_t > b_minus_at_s:
            k_on.add(p)
            w_on.add(p)
            continue
        k_plus.add(p)
        if isinstance(hit, _Terminal):
            w_on.add(p)  # Def 2.37 (iii) forbids the just-after part at TERMINAL
        else:
            w_plus.add(p)

    T = RandomInstant(assignment=tuple(t_vals))
    quadruple = DividedQuadruple(
        T=T,
        w_minus=frozenset(k_minus),
        w=frozenset(w_on),
        w_plus=frozenset(w_plus),
    )
    return SigmaStop(
        T=T,
        quadruple=quadruple,
        k_minus=frozenset(k_minus),
        k_on=frozenset(k_on),
        k_plus=frozenset(k_plus),
    )


@dataclass(frozen=True)
class OptimalityCertificate:
    candidate: RandomInstant
    condition_i: bool
    condition_ii: bool

    @property
    def optimal(self) -> bool:
        return self.condition_i and self.condition_ii


def stopped_process(
    lattice: FilteredLattice, process: LatticeProcess, U: RandomInstant
) -> LatticeProcess:
    """The process frozen at U: value at min(u, U) per instant, U-value at TERMINAL."""
    idx_u = U.indices(lattice)
    n = lattice.n_instants
    rows = []
    term = []
    for p in range(lattice.n_paths):
        stop = idx_u[p]
        row = tuple(
            process.values[p][idx if idx <= stop else stop] for idx in range(n)
        )
        rows.append(row)
        term.append(process.terminal[p] if stop >= n else process.values[p][stop])
    return LatticeProcess(values=tuple(rows), terminal=tuple(term))


def check_optimality(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
    U: RandomInstant,
    zbar: LatticeProcess | None = None,
) -> OptimalityCertificate:
    """Certificate: reward touches the envelope at U, and the stopped
    envelope stays a martingale."""
    if not is_lambda_stopping_time(lattice, meyer, U, Kind.LAMBDA):
        raise LatticeError("candidate is not a Lambda-stopping time")
    if zbar is None:
        zbar = snell_envelope(lattice, meyer, process)
    condition_i = U.value_of(process) == U.value_of(zbar)
    condition_ii = is_lambda_martingale(
        lattice, meyer, stopped_process(lattice, zbar, U)
    )
    return OptimalityCertificate(
        candidate=U, condition_i=condition_i, condition_ii=condition_ii
    )


def enumerate_divided_stops(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    from_S: RandomInstant | None = None,
    guard: int | None = DEFAULT_GUARD,
) -> list[DividedQuadruple]:
    """All canonical divided stops at or after S, in canonical order.

    Canonical divided stops (empty just-before part) correspond exactly to
    Lambda-stopping times in instant form: grid stops sit in the on-time
    part and interval stops in the just-after part of their grid point.
    """
    out = []
    for idx in sorted(
        iter_stopping_index_tuples(lattice, meyer, Kind.LAMBDA, lower=from_S, guard=guard)
    ):
        T = RandomInstant.from_indices(lattice, idx)
        out.append(to_divided_quadruple(lattice, meyer, T))
    return out


class PreconditionError(ValueError):
    """A theorem-level precondition failed; the message names the predicate."""


@dataclass(frozen=True)
class SmallestLargest:
    smallest: RandomInstant
    largest: RandomInstant
    all_optimal: tuple[RandomInstant, ...]


def smallest_largest_optimal(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    process: LatticeProcess,
    guard: int | None = DEFAULT_GUARD,
) -> SmallestLargest:
    """Entry times of {Z = Zbar} and of {M != Zbar}; optional structure and
    both semicontinuity predicates are required.

    Every optimal stopping time is sandwiched between the two pathwise.
    """
    from .projection import is_left_usc_in_expectation, is_right_usc_in_expectation

    if tuple(meyer.meyer_fields) != tuple(lattice.filtration):
        raise PreconditionError(
            "optional structure required: meyer fields must equal the filtration"
        )
    if not is_right_usc_in_expectation(lattice, meyer, process).ok:
        raise PreconditionError("is_right_usc_in_expectation failed")
    if not is_left_usc_in_expectation(lattice, meyer, process).ok:
        raise PreconditionError("is_left_usc_in_expectation failed")

    zbar = snell_envelope(lattice, meyer, process)
    decomp = mertens_decompose(lattice, meyer, zbar)
    n = lattice.n_instants

    smallest = delta_stop(
        lattice, meyer, process, RandomInstant.constant(lattice, Instant(0, AT)), zbar
    ).T

    largest_vals: list[TimePoint] = []
    for p in range(lattice.n_paths):
        first_active = None
        for idx in range(n):
            if decomp.m.values[p][idx] != zbar.values[p][idx]:
                first_active = idx
                break
        if first_active is None:
            largest_vals.append(TERMINAL)
            continue
        # An interval activation means the set is entered right after the
        # grid point, so the entry time is the grid point itself.
        if first_active % 2 == 1:
            first_active -= 1
        largest_vals.append(lattice.instant_at(first_active))
    largest = RandomInstant(assignment=tuple(largest_vals))

    cert_small = check_optimality(lattice, meyer, process, smallest, zbar)
    cert_large = check_optimality(lattice, meyer, process, largest, zbar)
    if not (cert_small.optimal and cert_large.optimal):
        raise LatticeError("entry-time candidates failed their optimality certificates")

    brute = snell_brute_force(lattice, meyer, process, guard)
    lo = smallest.indices(lattice)
    hi = largest.indices(lattice)
    for U in brute.optimizers:
        ui = U.indices(lattice)
        if not all(lo[p] <= ui[p] <= hi[p] for p in range(lattice.n_paths)):
            raise LatticeError(f"optimal time {U.assignment} escapes the sandwich")
    return SmallestLargest(
        smallest=smallest, largest=largest, all_optimal=brute.optimizers
    )
