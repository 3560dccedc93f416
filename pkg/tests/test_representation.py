from __future__ import annotations

import itertools
from fractions import Fraction

import pytest

from meyerstop.enumeration import enumerate_stopping_times
from meyerstop.lattice import (
    AT,
    INT,
    TERMINAL,
    DividedQuadruple,
    Instant,
    Kind,
    LatticeError,
    LatticeProcess,
    RandomInstant,
    validate_divided,
)
from meyerstop.representation import (
    GFamily,
    RandomMeasure,
    RepresentationError,
    RepresentationProblem,
    forward_evaluate,
    g_root,
    level_passage,
    solve_representation,
    stopping_value,
    universal_signal_check,
    validate_g,
)
from meyerstop.projection import is_right_usc_in_expectation
from meyerstop.snell import PreconditionError, enumerate_divided_stops
from meyerstop.scenario import RandomInstanceParams, generate_instance

def identity_g(lattice):
    n = lattice.n_instants
    zeros = [[0] * n for _ in range(lattice.n_paths)]
    ones = [[1] * n for _ in range(lattice.n_paths)]
    return GFamily.affine(zeros, ones)


@pytest.fixture
def single_path_problem(chain):
    lattice, meyer = chain
    g = identity_g(lattice)
    mu = RandomMeasure.from_rows([[1, 0, 1, 0]])
    L = LatticeProcess.from_rows([[5, 1, 3, 0]])
    return RepresentationProblem(lattice, meyer, g, mu, L=L)


def test_forward_single_path(single_path_problem):
    X = forward_evaluate(single_path_problem)
    assert X.values[0] == (10, 3, 3, 0)


def test_forward_constant_signal(chain):
    lattice, meyer = chain
    g = identity_g(lattice)
    mu = RandomMeasure.from_rows([[2, 1, 3, 1]])
    c = Fraction(4)
    L = LatticeProcess.from_rows([[c] * 4])
    X = forward_evaluate(RepresentationProblem(lattice, meyer, g, mu, L=L))
    remaining = [7, 5, 4, 1]
    assert X.values[0] == tuple(c * r for r in remaining)


def test_forward_zero_measure(chain):
    lattice, meyer = chain
    g = identity_g(lattice)
    mu = RandomMeasure.from_rows([[0, 0, 0, 0]])
    L = LatticeProcess.from_rows([[5, 1, 3, 0]])
    X = forward_evaluate(RepresentationProblem(lattice, meyer, g, mu, L=L))
    assert X.values[0] == (0, 0, 0, 0)


def test_solve_single_path(single_path_problem):
    lattice = single_path_problem.lattice
    X = forward_evaluate(single_path_problem)
    solved = solve_representation(single_path_problem.with_X(X))
    # window roots: 5 at the start, 3 once the first mass has been collected,
    # anything (canonically 0) once no mass remains
    assert solved.values[0] == (5, 3, 3, 0)
    again = forward_evaluate(single_path_problem.with_L(solved))
    assert again.values == X.values


def test_solve_zero_reward(chain):
    lattice, meyer = chain
    g = identity_g(lattice)
    mu = RandomMeasure.from_rows([[1, 1, 1, 0]])
    X = LatticeProcess.from_rows([[0, 0, 0, 0]])
    L = solve_representation(RepresentationProblem(lattice, meyer, g, mu, X=X))
    assert L.values[0] == (0, 0, 0, 0)


def test_solve_rejects_unrepresentable(chain):
    lattice, meyer = chain
    g = identity_g(lattice)
    # no mass anywhere, but the reward is nonzero
    mu = RandomMeasure.from_rows([[0, 0, 0, 0]])
    X = LatticeProcess.from_rows([[1, 1, 0, 0]])
    with pytest.raises(RepresentationError, match="not representable"):
        solve_representation(RepresentationProblem(lattice, meyer, g, mu, X=X))


def test_problem_needs_exactly_one_side(chain):
    lattice, meyer = chain
    g = identity_g(lattice)
    mu = RandomMeasure.from_rows([[1, 0, 1, 0]])
    L = LatticeProcess.from_rows([[5, 1, 3, 0]])
    with pytest.raises(LatticeError):
        RepresentationProblem(lattice, meyer, g, mu)
    with pytest.raises(LatticeError):
        RepresentationProblem(lattice, meyer, g, mu, X=L, L=L)


def test_g_root_examples():
    assert g_root([(1, Fraction(2), Fraction(1))], 5) == 3
    assert g_root(
        [(1, Fraction(0), Fraction(2)), (1, Fraction(1), Fraction(1))], 7
    ) == 2
    root = g_root([(1.0, lambda x: x**3)], 8, tolerance=1e-9)
    assert abs(root - 2) <= 1e-9
    with pytest.raises(LatticeError, match="zero total weight"):
        g_root([(0, Fraction(1), Fraction(1))], 1)


def test_validate_g(branch):
    lattice, meyer = branch
    validate_g(lattice, meyer, identity_g(lattice))
    # a slice varying inside an atom of F_0 is rejected
    a = [[0] * 4, [0] * 4]
    b = [[1, 1, 1, 1], [2, 1, 1, 1]]
    with pytest.raises(LatticeError, match="optional-measurable"):
        validate_g(lattice, meyer, GFamily.affine(a, b))
    decreasing = GFamily.monotone(
        [[lambda x: -x] * 4, [lambda x: -x] * 4]
    )
    with pytest.raises(LatticeError, match="strictly increasing"):
        validate_g(lattice, meyer, decreasing)


def test_stopping_value_examples(single_path_problem):
    problem = single_path_problem
    lattice = problem.lattice
    ell = Fraction(4)
    at0 = RandomInstant.constant(lattice, Instant(0, AT))
    assert stopping_value(problem, ell, at0) == 10
    at1 = RandomInstant.constant(lattice, Instant(1, AT))
    assert stopping_value(problem, ell, at1) == 3 + 4
    never = RandomInstant.constant(lattice, TERMINAL)
    assert stopping_value(problem, ell, never) == 0 + 4 + 4

    # with no mass, the objective is just the expected reward at the stop
    no_mass = RepresentationProblem(
        problem.lattice,
        problem.meyer,
        problem.g,
        RandomMeasure.from_rows([[0, 0, 0, 0]]),
        L=problem.L,
    )
    X = forward_evaluate(no_mass)
    for ell in (Fraction(-3), Fraction(0), Fraction(7)):
        for u in (Instant(0, AT), Instant(1, INT), TERMINAL):
            tau = RandomInstant.constant(lattice, u)
            assert stopping_value(no_mass, ell, tau) == (
                X.terminal[0] if u is TERMINAL else X.values[0][u.index]
            )


def test_stopping_value_interior_mass(chain):
    # interval mass sits strictly inside: stopping at the interval misses it,
    # stopping just before the next grid point collects it
    lattice, meyer = chain
    g = identity_g(lattice)
    mu = RandomMeasure.from_rows([[0, 1, 0, 0]])
    L = LatticeProcess.from_rows([[1, 1, 1, 0]])
    problem = RepresentationProblem(lattice, meyer, g, mu, L=L)
    ell = Fraction(10)
    at_interval = RandomInstant.constant(lattice, Instant(0, INT))
    X = forward_evaluate(problem)
    assert stopping_value(problem, ell, at_interval) == X.values[0][1]
    just_before = DividedQuadruple(
        T=RandomInstant.constant(lattice, Instant(1, AT)),
        w_minus=frozenset({0}),
        w=frozenset(),
        w_plus=frozenset(),
    )
    assert validate_divided(lattice, meyer, just_before).ok
    assert stopping_value(problem, ell, just_before) == X.values[0][1] + 10


def test_level_passage_examples(single_path_problem):
    problem = single_path_problem
    lattice, meyer = problem.lattice, problem.meyer
    L = problem.L
    at0 = RandomInstant.constant(lattice, Instant(0, AT))
    for variant in (1, 2):
        lp = level_passage(lattice, meyer, L, Fraction(4), variant)
        assert lp.T == at0

    lp1 = level_passage(lattice, meyer, L, Fraction(5), 1)
    lp2 = level_passage(lattice, meyer, L, Fraction(5), 2)
    assert lp1.T == at0
    assert lp2.T == RandomInstant.constant(lattice, TERMINAL)
    assert lp2.quadruple.w == frozenset({0}) and lp2.quadruple.w_plus == frozenset()

    lp = level_passage(lattice, meyer, L, Fraction(2), 1)
    assert lp.T == at0


def test_level_passage_monotone_in_level():
    sc = generate_instance(RandomInstanceParams(seed=5, epochs=2, max_paths=6))
    lattice, meyer = sc.lattice, sc.meyer
    L = sc.processes["L"]
    grid = sorted(sc.ell_grid)
    prev1 = prev2 = None
    for ell in grid:
        t1 = level_passage(lattice, meyer, L, ell, 1).T
        t2 = level_passage(lattice, meyer, L, ell, 2).T
        assert all(a <= b for a, b in zip(t1.assignment, t2.assignment))
        if prev1 is not None:
            assert all(a <= b for a, b in zip(prev1.assignment, t1.assignment))
            assert all(a <= b for a, b in zip(prev2.assignment, t2.assignment))
        prev1, prev2 = t1, t2


def test_universal_signal_single_path(single_path_problem):
    report = universal_signal_check(
        single_path_problem, [Fraction(2), Fraction(7, 2), Fraction(4)]
    )
    assert report.ok
    for row in report.rows:
        assert row.brute_force == 10


def test_universal_signal_low_level_stops_immediately(single_path_problem):
    problem = single_path_problem
    report = universal_signal_check(problem, [Fraction(-1)])
    X = forward_evaluate(problem)
    assert report.rows[0].value_variant_1 == X.values[0][0] == 10


def test_universal_signal_precondition_error(chain):
    lattice, meyer = chain
    g = identity_g(lattice)
    mu = RandomMeasure.from_rows([[0, 1, 1, 0]])
    L = LatticeProcess.from_rows([[0, 5, 0, 0]])
    problem = RepresentationProblem(lattice, meyer, g, mu, L=L)
    with pytest.raises(PreconditionError, match="is_left_usc_in_expectation"):
        universal_signal_check(problem, [Fraction(1)])


@pytest.mark.parametrize("seed", range(10))
def test_round_trip_seeded(seed):
    sc = generate_instance(
        RandomInstanceParams(seed=seed, epochs=1 + seed % 3, max_paths=2 + seed % 5)
    )
    problem = sc.build_problem()
    X = forward_evaluate(problem)
    solved = solve_representation(problem.with_X(X))
    assert forward_evaluate(problem.with_L(solved)).values == X.values


@pytest.mark.parametrize("seed", range(6))
def test_representable_reward_is_right_usc(seed):
    sc = generate_instance(
        RandomInstanceParams(seed=seed, epochs=1 + seed % 3, max_paths=2 + seed % 5)
    )
    problem = sc.build_problem()
    X = forward_evaluate(problem)
    assert is_right_usc_in_expectation(sc.lattice, sc.meyer, X).ok


def full_divided_stops(lattice, meyer):
    """Every quadruple (including just-before parts), small instances only."""
    n = lattice.n_paths
    out = []
    for T in enumerate_stopping_times(lattice, meyer, Kind.OPTIONAL):
        if any(isinstance(u, Instant) and u.tag == INT for u in T.assignment):
            continue
        for labels in itertools.product((-1, 0, 1), repeat=n):
            q = DividedQuadruple(
                T=T,
                w_minus=frozenset(p for p in range(n) if labels[p] == -1),
                w=frozenset(p for p in range(n) if labels[p] == 0),
                w_plus=frozenset(p for p in range(n) if labels[p] == 1),
            )
            if validate_divided(lattice, meyer, q).ok:
                out.append(q)
    return out


@pytest.mark.parametrize("seed", [0, 2, 4])
def test_just_before_stops_never_beat_canonical(seed):
    # with a left-USC reward, quadruples with a just-before part never exceed
    # the canonical optimum of the accrual objective
    sc = generate_instance(RandomInstanceParams(seed=seed, epochs=1, max_paths=3))
    problem = sc.build_problem()
    X = forward_evaluate(problem)
    full = full_divided_stops(sc.lattice, sc.meyer)
    canonical = enumerate_divided_stops(sc.lattice, sc.meyer)
    assert len(full) >= len(canonical)
    for ell in sc.ell_grid[:3]:
        full_best = max(
            stopping_value(problem, ell, q, X=X, validate=False) for q in full
        )
        canon_best = max(
            stopping_value(problem, ell, q, X=X, validate=False) for q in canonical
        )
        assert full_best == canon_best


def test_monotone_round_trip(chain):
    lattice, meyer = chain
    cube = GFamily.monotone([[lambda x: x**3] * 4], tolerance=1e-12)
    mu = RandomMeasure.from_rows([[1, 0, 1, 0]])
    L = LatticeProcess.from_rows([[2, 1, 3, 0]])
    problem = RepresentationProblem(lattice, meyer, cube, mu, L=L)
    X = forward_evaluate(problem)
    solved = solve_representation(problem.with_X(X))
    again = forward_evaluate(problem.with_L(solved))
    worst = max(
        abs(float(a) - float(b))
        for ra, rb in zip(again.values, X.values)
        for a, b in zip(ra, rb)
    )
    assert worst <= 1e-7


def test_value_affine_in_level_and_max_convex():
    # for a fixed policy the objective is affine in the level; the optimum is
    # a finite max of affine functions, hence convex along the grid
    sc = generate_instance(RandomInstanceParams(seed=8, epochs=2, max_paths=4))
    problem = sc.build_problem()
    X = forward_evaluate(problem)
    stops = enumerate_divided_stops(sc.lattice, sc.meyer)
    l0, l1 = Fraction(-1), Fraction(5)
    mid = (l0 + l1) / 2
    for q in stops[:10]:
        v0 = stopping_value(problem, l0, q, X=X, validate=False)
        v1 = stopping_value(problem, l1, q, X=X, validate=False)
        vm = stopping_value(problem, mid, q, X=X, validate=False)
        assert vm == (v0 + v1) / 2

    def best(ell):
        return max(stopping_value(problem, ell, q, X=X, validate=False) for q in stops)

    for a, b in ((l0, l1), (Fraction(0), Fraction(3)), (Fraction(1), Fraction(7))):
        assert best((a + b) / 2) <= (best(a) + best(b)) / 2
