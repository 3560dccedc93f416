"""Reward representation by a running-supremum signal.

A reward X is represented by a signal L when, at every instant and atom,
X equals the conditional sum of g evaluated at the running supremum of L
against the measure mu from that instant on.  `forward_evaluate` computes
X from L, `solve_representation` recovers a signal from X by per-atom
root-finding over future stopping times, and `universal_signal_check`
certifies that the level-passage stops of L solve the whole family of
accrual-adjusted stopping problems at once.

Affine g runs in exact rational arithmetic; monotone g falls back to
bisection and floats inside the root-finder only.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .enumeration import DEFAULT_GUARD, iter_stopping_index_tuples
from .lattice import (
    DividedQuadruple,
    FilteredLattice,
    Kind,
    LatticeError,
    LatticeProcess,
    MeyerStructure,
    RandomInstant,
    TERMINAL,
    TimePoint,
    _Terminal,
    field_partitions,
    is_lambda_stopping_time,
    is_measurable,
    to_divided_quadruple,
    validate_divided,
)
from .snell import PreconditionError, enumerate_divided_stops
from .projection import is_left_usc_in_expectation, is_right_usc_in_expectation

AFFINE = "affine"
MONOTONE = "monotone"

DEFAULT_ROOT_TOLERANCE = 1e-9
DEFAULT_VERIFY_TOLERANCE = 1e-7


class RepresentationError(ValueError):
    """The reward admits no representation with the supplied (g, mu)."""


@dataclass(frozen=True)
class GFamily:
    """Per-(path, instant) strictly increasing reward rates g_u(ell).

    AFFINE stores intercepts `a` and positive slopes `b` (g = a + b*ell,
    exact).  MONOTONE stores callables (strictly increasing, continuous,
    surjective) and works to `tolerance` inside the root-finder.
    """

    kind: str
    a: tuple[tuple[Fraction, ...], ...] | None = None
    b: tuple[tuple[Fraction, ...], ...] | None = None
    funcs: tuple[tuple[Callable[[float], float], ...], ...] | None = None
    tolerance: float = DEFAULT_ROOT_TOLERANCE

    @classmethod
    def affine(cls, a, b) -> "GFamily":
        a_rows = tuple(tuple(Fraction(v) for v in row) for row in a)
        b_rows = tuple(tuple(Fraction(v) for v in row) for row in b)
        if any(v <= 0 for row in b_rows for v in row):
            raise LatticeError("affine slopes must be strictly positive")
        return cls(kind=AFFINE, a=a_rows, b=b_rows)

    @classmethod
    def monotone(
        cls, funcs, tolerance: float = DEFAULT_ROOT_TOLERANCE
    ) -> "GFamily":
        return cls(kind=MONOTONE, funcs=tuple(tuple(row) for row in funcs), tolerance=tolerance)

    def value(self, path: int, idx: int, ell):
        if self.kind == AFFINE:
            return self.a[path][idx] + self.b[path][idx] * ell
        return self.funcs[path][idx](float(ell))


def validate_g(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    g: GFamily,
    probe: Sequence[Fraction] = (Fraction(-2), Fraction(0), Fraction(1), Fraction(3)),
) -> None:
    """Strict monotonicity (exact for affine, spot-checked for monotone) and
    optional measurability of every instant slice."""
    fields = field_partitions(lattice, meyer, Kind.OPTIONAL)
    for idx, part in enumerate(fields):
        for block in part:
            for ell in probe:
                vals = {g.value(p, idx, ell) for p in block}
                if len(vals) > 1:
                    raise LatticeError(
                        f"g slice at instant index {idx} is not optional-measurable"
                    )
    if g.kind == MONOTONE:
        for p in range(lattice.n_paths):
            for idx in range(lattice.n_instants):
                vals = [g.value(p, idx, ell) for ell in sorted(probe)]
                if any(x >= y for x, y in zip(vals, vals[1:])):
                    raise LatticeError(
                        f"g at path {p}, instant index {idx} is not strictly increasing"
                    )


@dataclass(frozen=True)
class RandomMeasure:
    """Nonnegative mass per (path, instant); no mass at TERMINAL."""

    mass: tuple[tuple[Fraction, ...], ...]

    @classmethod
    def from_rows(cls, rows) -> "RandomMeasure":
        mass = tuple(tuple(Fraction(v) for v in row) for row in rows)
        if any(v < 0 for row in mass for v in row):
            raise LatticeError("measure masses must be nonnegative")
        return cls(mass=mass)


@dataclass(frozen=True)
class RepresentationProblem:
    """Bundle of (lattice, meyer, g, mu) plus exactly one of X or L."""

    lattice: FilteredLattice
    meyer: MeyerStructure
    g: GFamily
    mu: RandomMeasure
    X: LatticeProcess | None = None
    L: LatticeProcess | None = None

    def __post_init__(self) -> None:
        if (self.X is None) == (self.L is None):
            raise LatticeError("provide exactly one of X or L")

    def with_L(self, L: LatticeProcess) -> "RepresentationProblem":
        return RepresentationProblem(self.lattice, self.meyer, self.g, self.mu, None, L)

    def with_X(self, X: LatticeProcess) -> "RepresentationProblem":
        return RepresentationProblem(self.lattice, self.meyer, self.g, self.mu, X, None)


def forward_evaluate(problem: RepresentationProblem) -> LatticeProcess:
    """X from L: conditional remaining reward of the running supremum.

    At instant u and atom of the Lambda field, X is the probability-weighted
    atom average of sum_{w >= u} g_w(max of L over [u, w]) * mu_w; the
    terminal slice is zero.
    """
    lattice, meyer, g, mu = problem.lattice, problem.meyer, problem.g, problem.mu
    L = problem.L
    if L is None:
        raise LatticeError("forward_evaluate needs the signal process L")
    if not is_measurable(lattice, meyer, L, Kind.LAMBDA):
        raise LatticeError("signal process is not Lambda-measurable")
    n = lattice.n_instants
    probs = lattice.probabilities
    # per path and start instant: sum over w >= u of g_w(running max of L) mu_w
    tails: list[list] = []
    for p in range(lattice.n_paths):
        row = []
        for u in range(n):
            running = L.values[p][u]
            acc = None
            for w in range(u, n):
                if L.values[p][w] > running:
                    running = L.values[p][w]
                if mu.mass[p][w] != 0:
                    term = g.value(p, w, running) * mu.mass[p][w]
                    acc = term if acc is None else acc + term
            row.append(acc if acc is not None else Fraction(0))
        tails.append(row)
    fields = field_partitions(lattice, meyer, Kind.LAMBDA)
    columns = []
    for u, part in enumerate(fields):
        col = [None] * lattice.n_paths
        for block in part:
            mass = sum((probs[p] for p in block), Fraction(0))
            avg = sum(probs[p] * tails[p][u] for p in block) / mass
            for p in block:
                col[p] = avg
        columns.append(col)
    values = tuple(
        tuple(columns[u][p] for u in range(n)) for p in range(lattice.n_paths)
    )
    terminal = tuple(Fraction(0) for _ in range(lattice.n_paths))
    return LatticeProcess(values=values, terminal=terminal)


def g_root(terms: Sequence[tuple], target, tolerance: float | None = None):
    """Solve sum_w c_w * g_w(ell) = target for the unique ell.

    Affine terms are (weight, intercept, slope) triples and solve exactly;
    monotone terms are (weight, callable) pairs and bisect to `tolerance`
    after bracket expansion.  Weights must not all vanish.
    """
    if not terms:
        raise LatticeError("g_root needs at least one term")
    if len(terms[0]) == 3:
        total_b = sum((c * b for c, _a, b in terms), Fraction(0))
        if total_b == 0:
            raise LatticeError("g_root: zero total weight")
        total_a = sum((c * a for c, a, _b in terms), Fraction(0))
        return (Fraction(target) - total_a) / total_b
    tol = DEFAULT_ROOT_TOLERANCE if tolerance is None else tolerance
    weights = [float(c) for c, _f in terms]
    if sum(weights) == 0:
        raise LatticeError("g_root: zero total weight")
    funcs = [f for _c, f in terms]
    tgt = float(target)

    def h(ell: float) -> float:
        return sum(c * f(ell) for c, f in zip(weights, funcs)) - tgt

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if h(lo) <= 0:
            break
        lo *= 2
    for _ in range(200):
        if h(hi) >= 0:
            break
        hi *= 2
    if h(lo) > 0 or h(hi) < 0:
        raise LatticeError("g_root: failed to bracket the root")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def solve_representation(
    problem: RepresentationProblem,
    guard: int | None = DEFAULT_GUARD,
    verify_tolerance: float | None = None,
) -> LatticeProcess:
    """Recover a signal L from X by per-atom minimization of window roots.

    For each instant u and atom of the Lambda field, every stopping time T
    strictly after u on the atom contributes the root of

        E[ sum_{u <= w < T} g_w(ell) mu_w | atom ] = E[ X_u - X_T | atom ]

    and L_u is the minimum of those roots (TERMINAL included, with X_T = 0).
    Windows carrying no mass are skipped; an atom whose remaining mass is
    exhausted takes L = 0 and must carry X = 0.  The forward check runs at
    the end and failure raises RepresentationError.
    """
    lattice, meyer, g, mu = problem.lattice, problem.meyer, problem.g, problem.mu
    X = problem.X
    if X is None:
        raise LatticeError("solve_representation needs the reward process X")
    if not is_measurable(lattice, meyer, X, Kind.LAMBDA):
        raise LatticeError("reward process is not Lambda-measurable")
    if any(t != 0 for t in X.terminal):
        raise LatticeError("reward process must vanish at TERMINAL")
    affine = g.kind == AFFINE
    n = lattice.n_instants
    probs = lattice.probabilities
    fields = field_partitions(lattice, meyer, Kind.LAMBDA)

    columns: list[list] = [[None] * lattice.n_paths for _ in range(n)]
    for u in range(n):
        for block in fields[u]:
            lower = RandomInstant.from_indices(
                lattice, [u + 1 if p in block else n for p in range(lattice.n_paths)]
            )
            best = None
            for cand in iter_stopping_index_tuples(
                lattice, meyer, Kind.LAMBDA, lower=lower, scope=block, guard=guard
            ):
                if affine:
                    terms = []
                else:
                    terms_m = []
                rhs = Fraction(0)
                weight_seen = False
                for p in block:
                    stop = cand[p]
                    rhs += probs[p] * X.values[p][u]
                    if stop < n:
                        rhs -= probs[p] * X.values[p][stop]
                    for w in range(u, min(stop, n)):
                        m = mu.mass[p][w]
                        if m == 0:
                            continue
                        weight_seen = True
                        if affine:
                            terms.append((probs[p] * m, g.a[p][w], g.b[p][w]))
                        else:
                            terms_m.append((probs[p] * m, g.funcs[p][w]))
                if not weight_seen:
                    continue
                root = g_root(
                    terms if affine else terms_m,
                    rhs,
                    None if affine else g.tolerance,
                )
                if best is None or root < best:
                    best = root
            if best is None:
                atom_x = sum(probs[p] * X.values[p][u] for p in block)
                if atom_x != 0:
                    raise RepresentationError(
                        "X not representable with this (g, mu): "
                        f"mass exhausted before instant index {u} but X is nonzero"
                    )
                best = Fraction(0)
            for p in block:
                columns[u][p] = best

    values = tuple(
        tuple(columns[u][p] for u in range(n)) for p in range(lattice.n_paths)
    )
    L = LatticeProcess(
        values=values, terminal=tuple(Fraction(0) for _ in range(lattice.n_paths))
    )
    produced = forward_evaluate(problem.with_L(L))
    if affine:
        if produced.values != X.values:
            raise RepresentationError(
                "X not representable with this (g, mu): forward check failed"
            )
    else:
        tol = DEFAULT_VERIFY_TOLERANCE if verify_tolerance is None else verify_tolerance
        worst = max(
            abs(float(produced.values[p][u]) - float(X.values[p][u]))
            for p in range(lattice.n_paths)
            for u in range(n)
        )
        if worst > tol:
            raise RepresentationError(
                f"X not representable with this (g, mu): forward check off by {worst}"
            )
    return L


def _accrual_cutoffs(
    lattice: FilteredLattice, tau: RandomInstant | DividedQuadruple
) -> list[tuple[int, int]]:
    """Per path: (reading index, accrual cutoff index); n_instants codes TERMINAL.

    Accrual is over w strictly before the stop in instant order.  A grid
    stop excludes its own grid mass; a just-after stop includes the grid
    mass but not the interval mass; a just-before stop includes the
    previous interval mass.
    """
    n = lattice.n_instants
    out: list[tuple[int, int]] = []
    if isinstance(tau, RandomInstant):
        for u in tau.assignment:
            if isinstance(u, _Terminal):
                out.append((n, n))
            else:
                out.append((u.index, u.index))
        return out
    for p, u in enumerate(tau.T.assignment):
        if p in tau.w_minus:
            if isinstance(u, _Terminal):
                out.append((n - 1, n))
            else:
                out.append((u.index - 1, u.index))
        elif p in tau.w_plus:
            out.append((u.index + 1, u.index + 1))
        else:
            if isinstance(u, _Terminal):
                out.append((n, n))
            else:
                out.append((u.index, u.index))
    return out


def stopping_value(
    problem: RepresentationProblem,
    ell,
    tau: RandomInstant | DividedQuadruple,
    X: LatticeProcess | None = None,
    validate: bool = True,
):
    """E[X at tau + accrued g(ell)-mass strictly before tau]."""
    lattice, meyer = problem.lattice, problem.meyer
    if validate:
        if isinstance(tau, RandomInstant):
            if not is_lambda_stopping_time(lattice, meyer, tau, Kind.LAMBDA):
                raise LatticeError("tau is not a Lambda-stopping time")
        else:
            report = validate_divided(lattice, meyer, tau)
            if not report.ok:
                raise LatticeError(
                    "tau is not a divided stopping time: " + "; ".join(report.problems)
                )
    if X is None:
        X = problem.X if problem.X is not None else forward_evaluate(problem)
    probs = lattice.probabilities
    n = lattice.n_instants
    total = Fraction(0)
    for p, (read, cutoff) in enumerate(_accrual_cutoffs(lattice, tau)):
        reward = X.terminal[p] if read >= n else X.values[p][read]
        accrued = reward
        for w in range(cutoff):
            m = problem.mu.mass[p][w]
            if m != 0:
                accrued += problem.g.value(p, w, ell) * m
        total += probs[p] * accrued
    return total


@dataclass(frozen=True)
class LevelPassage:
    T: RandomInstant
    quadruple: DividedQuadruple


def level_passage(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    L: LatticeProcess,
    ell,
    variant: int,
) -> LevelPassage:
    """First instant where the running supremum of L reaches (variant 1) or
    exceeds (variant 2) the level; suprema are attained on the lattice, so
    both variants are plain stopping times in quadruple form."""
    if variant not in (1, 2):
        raise LatticeError("variant must be 1 or 2")
    if not is_measurable(lattice, meyer, L, Kind.LAMBDA):
        raise LatticeError("signal process is not Lambda-measurable")
    n = lattice.n_instants
    out: list[TimePoint] = []
    for p in range(lattice.n_paths):
        running = None
        hit: TimePoint = TERMINAL
        for idx in range(n):
            v = L.values[p][idx]
            running = v if running is None or v > running else running
            if (variant == 1 and running >= ell) or (variant == 2 and running > ell):
                hit = lattice.instant_at(idx)
                break
        out.append(hit)
    T = RandomInstant(assignment=tuple(out))
    return LevelPassage(T=T, quadruple=to_divided_quadruple(lattice, meyer, T))


@dataclass(frozen=True)
class SignalRow:
    ell: Fraction
    value_variant_1: Fraction
    value_variant_2: Fraction
    brute_force: Fraction
    optimizer_count: int

    @property
    def ok(self) -> bool:
        return self.value_variant_1 == self.brute_force == self.value_variant_2


@dataclass(frozen=True)
class SignalReport:
    rows: tuple[SignalRow, ...]
    right_usc_holds: bool

    @property
    def ok(self) -> bool:
        return self.right_usc_holds and all(r.ok for r in self.rows)


def universal_signal_check(
    problem: RepresentationProblem,
    ell_grid: Sequence,
    guard: int | None = DEFAULT_GUARD,
    jobs: int | None = None,
) -> SignalReport:
    """Level-passage stops of L attain every accrual-adjusted optimum.

    Requires a nonnegative representable X that is left-USC in expectation
    (named error otherwise); verifies the implied right-USC, then compares
    both level-passage variants against the enumerated divided-stop optimum
    at each grid level, in grid order.  Grid points may be evaluated
    concurrently; the report order never depends on scheduling.
    """
    lattice, meyer = problem.lattice, problem.meyer
    X = problem.X if problem.X is not None else forward_evaluate(problem)
    L = problem.L if problem.L is not None else solve_representation(problem, guard)
    if not is_left_usc_in_expectation(lattice, meyer, X).ok:
        raise PreconditionError("is_left_usc_in_expectation failed for X")
    right_ok = is_right_usc_in_expectation(lattice, meyer, X).ok
    stops = enumerate_divided_stops(lattice, meyer, guard=guard)

    def evaluate(ell) -> SignalRow:
        v1 = stopping_value(
            problem,
            ell,
            level_passage(lattice, meyer, L, ell, 1).quadruple,
            X=X,
            validate=False,
        )
        v2 = stopping_value(
            problem,
            ell,
            level_passage(lattice, meyer, L, ell, 2).quadruple,
            X=X,
            validate=False,
        )
        best = None
        count = 0
        for q in stops:
            val = stopping_value(problem, ell, q, X=X, validate=False)
            if best is None or val > best:
                best, count = val, 1
            elif val == best:
                count += 1
        return SignalRow(
            ell=ell,
            value_variant_1=v1,
            value_variant_2=v2,
            brute_force=best,
            optimizer_count=count,
        )

    if jobs is not None and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = tuple(pool.map(evaluate, ell_grid))
    else:
        rows = tuple(evaluate(ell) for ell in ell_grid)
    return SignalReport(rows=rows, right_usc_holds=right_ok)
