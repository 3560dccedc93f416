"""Named verification properties.

Each check returns None on success or a failure message; the suite command
turns these into PASS/FAIL rows and the acceptance tests reuse them.  All
checks are exact: any tolerance would hide a real defect because every
quantity is rational.
"""

from __future__ import annotations

from fractions import Fraction

from .enumeration import (
    DEFAULT_GUARD,
    EnumerationGuardError,
    iter_stopping_index_tuples,
)
from .lattice import (
    AT,
    Instant,
    Kind,
    LatticeProcess,
    RandomInstant,
    field_at_time,
    field_partitions,
    conditional_expectation,
    is_measurable,
    validate_divided,
    validate_lattice,
)
from .projection import (
    Mode,
    Side,
    check_projection_fatou,
    check_usc_sequence_equivalence,
    envelope,
    project,
)
from .representation import (
    RepresentationError,
    RepresentationProblem,
    forward_evaluate,
    solve_representation,
    universal_signal_check,
)
from .snell import (
    PreconditionError,
    check_optimality,
    delta_stop,
    enumerate_divided_stops,
    expected_value,
    is_lambda_martingale,
    is_lambda_supermartingale,
    lambda_entry_time,
    mertens_decompose,
    sigma_stop,
    smallest_largest_optimal,
    snell_brute_force,
    snell_envelope,
)


def is_reward(lattice, meyer, process) -> bool:
    return (
        is_measurable(lattice, meyer, process, Kind.LAMBDA)
        and all(v >= 0 for row in process.values for v in row)
        and all(t == 0 for t in process.terminal)
    )


def check_lattice_valid(lattice, meyer) -> str | None:
    report = validate_lattice(lattice, meyer)
    return None if report.ok else "; ".join(report.problems)


def check_projection_normalization(lattice, meyer) -> str | None:
    one = LatticeProcess.constant(lattice, 1)
    for kind in Kind:
        if project(lattice, meyer, one, kind).values != one.values:
            return f"projection of the constant 1 is not 1 under {kind.value}"
    return None


def check_projection_tower(lattice, meyer, process) -> str | None:
    lam = project(lattice, meyer, process, Kind.LAMBDA)
    opt = project(lattice, meyer, process, Kind.OPTIONAL)
    pred = project(lattice, meyer, process, Kind.PREDICTABLE)
    if project(lattice, meyer, lam, Kind.PREDICTABLE).values != pred.values:
        return "predictable of Lambda-projection differs from predictable projection"
    if project(lattice, meyer, opt, Kind.LAMBDA).values != lam.values:
        return "Lambda of optional projection differs from Lambda-projection"
    return None


def check_projection_linearity(lattice, meyer, process) -> str | None:
    scaled = LatticeProcess(
        values=tuple(tuple(3 * v for v in row) for row in process.values),
        terminal=tuple(3 * t for t in process.terminal),
    )
    lam = project(lattice, meyer, process, Kind.LAMBDA)
    lam3 = project(lattice, meyer, scaled, Kind.LAMBDA)
    if lam3.values != tuple(tuple(3 * v for v in row) for row in lam.values):
        return "projection is not homogeneous"
    if any(v < 0 for row in process.values for v in row):
        return None
    if any(v < 0 for row in lam.values for v in row):
        return "projection lost nonnegativity"
    return None


def check_projection_duality(lattice, meyer, process) -> str | None:
    """E[sum Z dA] = E[sum (lam Z) dA] for increasing Lambda-measurable A.

    The one-jump indicators 1_{[[u_H, oo[[} over instants u and atoms H
    linearly span every such A, so checking them (and one aggregate) is
    exhaustive.
    """
    lam = project(lattice, meyer, process, Kind.LAMBDA)
    probs = lattice.probabilities
    fields = field_partitions(lattice, meyer, Kind.LAMBDA)
    agg_raw = Fraction(0)
    agg_lam = Fraction(0)
    for idx, part in enumerate(fields):
        for block in part:
            raw = sum(probs[p] * process.values[p][idx] for p in block)
            pro = sum(probs[p] * lam.values[p][idx] for p in block)
            if raw != pro:
                u = lattice.instant_at(idx)
                return f"duality fails for the unit jump at {u} on atom {sorted(block)}"
            agg_raw += raw
            agg_lam += pro
    if agg_raw != agg_lam:
        return "duality fails for the aggregate increasing process"
    return None


def check_fatou(lattice, meyer, process, guard=DEFAULT_GUARD) -> str | None:
    report = check_projection_fatou(lattice, meyer, process, guard)
    if report.ok:
        return None
    return report.violations[0]


def check_usc_equivalence(lattice, meyer, process, guard=DEFAULT_GUARD) -> str | None:
    report = check_usc_sequence_equivalence(lattice, meyer, process, guard)
    return report.counterexample


def check_snell_oracle(lattice, meyer, process, guard=DEFAULT_GUARD) -> str | None:
    zbar = snell_envelope(lattice, meyer, process)
    brute = snell_brute_force(lattice, meyer, process, guard)
    root = expected_value(lattice, zbar.slice_at(0))
    if root != brute.value:
        return f"envelope root {root} differs from brute force {brute.value}"
    return None


def check_envelope_dominance(lattice, meyer, process) -> str | None:
    zbar = snell_envelope(lattice, meyer, process)
    if not is_measurable(lattice, meyer, zbar, Kind.LAMBDA):
        return "envelope is not Lambda-measurable"
    if not is_lambda_supermartingale(lattice, meyer, zbar):
        return "envelope is not a supermartingale"
    for p in range(lattice.n_paths):
        for idx in range(lattice.n_instants):
            if zbar.values[p][idx] < process.values[p][idx]:
                return f"envelope fails to dominate at path {p}, index {idx}"
    return None


def check_mertens(lattice, meyer, process) -> str | None:
    """Jump formulas, monotonicity, measurability, and touch inclusions."""
    zbar = snell_envelope(lattice, meyer, process)
    d = mertens_decompose(lattice, meyer, zbar)
    left = envelope(lattice, zbar, Side.LEFT, Mode.SUP)
    left_reward = envelope(lattice, process, Side.LEFT, Mode.SUP)
    right = envelope(lattice, zbar, Side.RIGHT, Mode.SUP)
    pred = project(lattice, meyer, zbar, Kind.PREDICTABLE)
    lam_right = project(lattice, meyer, right, Kind.LAMBDA)

    if any(v != 0 for v in d.delta_a[0]):
        return "A jumps at epoch 0"
    for k in range(lattice.epoch_count + 1):
        idx = Instant(k, AT).index
        for p in range(lattice.n_paths):
            if k >= 1 and d.delta_a[k][p] != left.values[p][idx] - pred.values[p][idx]:
                return f"delta-A formula fails at epoch {k}, path {p}"
            if d.delta_b[k][p] != zbar.values[p][idx] - lam_right.values[p][idx]:
                return f"delta-B formula fails at epoch {k}, path {p}"
            if d.delta_a[k][p] < 0 or d.delta_b[k][p] < 0:
                return f"negative compensator jump at epoch {k}, path {p}"
            if k >= 1 and d.delta_a[k][p] > 0:
                if left.values[p][idx] != left_reward.values[p][idx]:
                    return f"A grows off the left-touch set at epoch {k}, path {p}"
            if d.delta_b[k][p] > 0:
                if zbar.values[p][idx] != process.values[p][idx]:
                    return f"B grows off the touch set at epoch {k}, path {p}"
            # lattice sup identities
            if zbar.values[p][idx] != max(lam_right.values[p][idx], process.values[p][idx]):
                return f"envelope differs from continuation-vs-reward max at epoch {k}, path {p}"
            if k >= 1 and left.values[p][idx] != max(
                pred.values[p][idx], left_reward.values[p][idx]
            ):
                return f"left-limit max identity fails at epoch {k}, path {p}"
    if not is_lambda_martingale(lattice, meyer, d.m):
        return "M is not a Lambda-martingale"
    if not is_measurable(lattice, meyer, d.a, Kind.PREDICTABLE):
        return "A is not predictable"
    if not is_measurable(lattice, meyer, d.b, Kind.LAMBDA):
        return "B is not Lambda-measurable"
    for p in range(lattice.n_paths):
        row_a, row_b = d.a.values[p], d.b.values[p]
        if any(x > y for x, y in zip(row_a, row_a[1:])) or row_a[-1] > d.a.terminal[p]:
            return f"A is not nondecreasing on path {p}"
        if any(x > y for x, y in zip(row_b, row_b[1:])) or row_b[-1] != d.b.terminal[p]:
            return f"B is not nondecreasing-with-flat-terminal on path {p}"
        for idx in range(lattice.n_instants):
            recon = d.m.values[p][idx] - d.a.values[p][idx] - d.b_shifted.values[p][idx]
            if recon != zbar.values[p][idx]:
                return f"Zbar = M - A - B_- fails at path {p}, index {idx}"
        if d.m.terminal[p] - d.a.terminal[p] - d.b_shifted.terminal[p] != 0:
            return f"terminal reconstruction fails on path {p}"
    return None


def _as_instant_form(lattice, meyer, q):
    from .lattice import from_divided_quadruple

    return from_divided_quadruple(lattice, q)


def check_delta(
    lattice, meyer, process, starts, guard=DEFAULT_GUARD
) -> str | None:
    """Relaxation exactness from every start: E[Zbar_S] = E[Z at delta_S]
    = max over enumerated divided stops, plus the conditional identity and
    the lambda-entry stabilization."""
    zbar = snell_envelope(lattice, meyer, process)
    probs = lattice.probabilities
    ratios = [
        process.values[p][i] / zbar.values[p][i]
        for p in range(lattice.n_paths)
        for i in range(lattice.n_instants)
        if zbar.values[p][i] > process.values[p][i] and zbar.values[p][i] > 0
    ]
    lam_star = max(ratios) if ratios else Fraction(0)
    lam = (1 + lam_star) / 2

    for S in starts:
        ds = delta_stop(lattice, meyer, process, S, zbar)
        report = validate_divided(lattice, meyer, ds.quadruple)
        if not report.ok:
            return f"delta quadruple invalid from {S.assignment}: {report.problems[0]}"
        env_at_s = expected_value(lattice, S.value_of(zbar))
        val = expected_value(lattice, ds.T.value_of(process))
        if env_at_s != val:
            return f"E[Zbar_S] {env_at_s} != E[Z at delta] {val} from {S.assignment}"
        if ds.T.value_of(process) != ds.T.value_of(zbar):
            return f"entry not attained from {S.assignment}"
        # conditional identity: Zbar_S = E[Z at T_S | field at S]
        reading = ds.T.value_of(process)
        cond = conditional_expectation(
            lattice, reading, field_at_time(lattice, meyer, S, Kind.LAMBDA)
        )
        if tuple(cond) != S.value_of(zbar):
            return f"conditional relaxation identity fails from {S.assignment}"
        # stabilized lambda-entry
        if lambda_entry_time(lattice, meyer, process, zbar, lam, S) != ds.T:
            return f"lambda-entry fails to stabilize from {S.assignment}"
        ent = lambda_entry_time(lattice, meyer, process, zbar, Fraction(1, 2), S)
        if expected_value(lattice, ent.value_of(zbar)) != env_at_s:
            return f"E[Zbar] not preserved at the 1/2-entry time from {S.assignment}"
        decomp = mertens_decompose(lattice, meyer, zbar)
        if ent.value_of(decomp.a) != S.value_of(decomp.a):
            return f"A moves before the 1/2-entry time from {S.assignment}"
        try:
            stops = enumerate_divided_stops(lattice, meyer, from_S=S, guard=guard)
        except EnumerationGuardError:
            continue
        best = None
        for q in stops:
            v = expected_value(
                lattice, _as_instant_form(lattice, meyer, q).value_of(process)
            )
            if best is None or v > best:
                best = v
        if best != env_at_s:
            return f"divided-stop maximum {best} != E[Zbar_S] {env_at_s} from {S.assignment}"
    return None


def check_sigma(lattice, meyer, process, starts) -> str | None:
    zbar = snell_envelope(lattice, meyer, process)
    decomp = mertens_decompose(lattice, meyer, zbar)
    for S in starts:
        ss = sigma_stop(lattice, meyer, process, S, zbar, decomp)
        report = validate_divided(lattice, meyer, ss.quadruple)
        if not report.ok:
            return f"sigma quadruple invalid from {S.assignment}: {report.problems[0]}"
        form = _as_instant_form(lattice, meyer, ss.quadruple)
        if form.value_of(zbar) != form.value_of(process):
            return f"Zbar != Z at sigma from {S.assignment}"
        if expected_value(lattice, form.value_of(process)) != expected_value(
            lattice, S.value_of(zbar)
        ):
            return f"E[Zbar_S] != E[Z at sigma] from {S.assignment}"
    return None


def check_optimality_oracle(lattice, meyer, process, guard=DEFAULT_GUARD) -> str | None:
    """Certificate verdict iff brute-force optimality, for every stopping time."""
    zbar = snell_envelope(lattice, meyer, process)
    brute = snell_brute_force(lattice, meyer, process, guard)
    for idx in iter_stopping_index_tuples(lattice, meyer, Kind.LAMBDA, guard=guard):
        U = RandomInstant.from_indices(lattice, idx)
        cert = check_optimality(lattice, meyer, process, U, zbar)
        achieved = expected_value(lattice, U.value_of(process))
        if cert.optimal != (achieved == brute.value):
            return (
                f"certificate says {cert.optimal} but value {achieved} vs "
                f"optimum {brute.value} at {U.assignment}"
            )
    return None


def check_sandwich(lattice, meyer, process, guard=DEFAULT_GUARD) -> str | None:
    """Optional-regime instances: delta and sigma bracket every optimal time
    and match the entry-time characterizations exactly."""
    try:
        result = smallest_largest_optimal(lattice, meyer, process, guard)
    except PreconditionError as exc:
        return f"SKIP: {exc}"
    zero = RandomInstant.constant(lattice, Instant(0, AT))
    ds = delta_stop(lattice, meyer, process, zero)
    if result.smallest != ds.T:
        return "smallest optimal time differs from the delta entry time"
    ss = sigma_stop(lattice, meyer, process, zero)
    if result.largest != ss.T:
        return "largest optimal time differs from the sigma compensator time"
    lo = ds.T.indices(lattice)
    hi = _as_instant_form(lattice, meyer, ss.quadruple).indices(lattice)
    for U in result.all_optimal:
        ui = U.indices(lattice)
        if not all(lo[p] <= ui[p] <= hi[p] for p in range(lattice.n_paths)):
            return f"optimal time {U.assignment} escapes the delta/sigma bracket"
    return None


def check_representation_roundtrip(problem: RepresentationProblem, guard=DEFAULT_GUARD) -> str | None:
    if problem.L is not None:
        X = forward_evaluate(problem)
        problem = problem.with_X(X)
    try:
        L = solve_representation(problem, guard)
    except RepresentationError as exc:
        return str(exc)
    produced = forward_evaluate(problem.with_L(L))
    if problem.g.kind == "affine":
        if produced.values != problem.X.values:
            return "forward(solve(X)) differs from X"
    return None


def check_universal_signal(
    problem: RepresentationProblem, ell_grid, guard=DEFAULT_GUARD, jobs=None
) -> str | None:
    try:
        report = universal_signal_check(problem, ell_grid, guard, jobs)
    except PreconditionError as exc:
        return f"SKIP: {exc}"
    if not report.right_usc_holds:
        return "representable X is not right-USC in expectation"
    for row in report.rows:
        if not row.ok:
            return (
                f"level {row.ell}: passage values {row.value_variant_1}/"
                f"{row.value_variant_2} vs brute force {row.brute_force}"
            )
    return None
