"""Exhaustive enumeration of stopping times on the instant chain.

A stopping time of a given kind assigns each path an instant (or TERMINAL)
so that, at every instant, the set of already-stopped paths is a union of
atoms of that instant's field.  Because the per-instant fields refine each
other along the chain, the valid assignments are exactly those produced by
deciding, instant by instant and atom by atom, whether the still-active
part of the atom stops now.

Everything here works on bitmasks and instant indices for speed; the
public oracles wrap results back into domain objects.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterator, Sequence

from .lattice import (
    FilteredLattice,
    Kind,
    MeyerStructure,
    Partition,
    RandomInstant,
    field_partitions,
)

DEFAULT_GUARD = 10**6


class EnumerationGuardError(RuntimeError):
    """The instance admits more stopping times than the enumeration guard."""


def _mask(block: frozenset[int]) -> int:
    m = 0
    for i in block:
        m |= 1 << i
    return m


def _atom_masks(partition: Partition) -> list[int]:
    return [_mask(b) for b in partition]


def _instant_atom_masks(
    lattice: FilteredLattice, meyer: MeyerStructure, kind: Kind
) -> list[list[int]]:
    return [_atom_masks(p) for p in field_partitions(lattice, meyer, kind)]


def _lower_indices(
    lattice: FilteredLattice, lower: RandomInstant | None
) -> tuple[int, ...]:
    if lower is None:
        return tuple(0 for _ in range(lattice.n_paths))
    return lower.indices(lattice)


def count_stopping_times(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    kind: Kind = Kind.LAMBDA,
    lower: RandomInstant | None = None,
    scope: frozenset[int] | None = None,
) -> int:
    """Number of stopping times (with T >= lower pathwise, within scope)."""
    n_inst = lattice.n_instants
    fields = _instant_atom_masks(lattice, meyer, kind)
    low = _lower_indices(lattice, lower)
    scope_mask = (
        (1 << lattice.n_paths) - 1 if scope is None else _mask(frozenset(scope))
    )

    memo: dict[tuple[int, int], int] = {}

    def rec(i: int, active: int) -> int:
        if i == n_inst or active == 0:
            return 1
        key = (i, active)
        got = memo.get(key)
        if got is not None:
            return got
        eligible = []
        for am in fields[i]:
            part = am & active
            if part and all(low[p] <= i for p in _bits(part)):
                eligible.append(part)
        total = 0
        for choice in range(1 << len(eligible)):
            stopped = 0
            for j in range(len(eligible)):
                if choice >> j & 1:
                    stopped |= eligible[j]
            total += rec(i + 1, active & ~stopped)
        memo[key] = total
        return total

    return rec(0, scope_mask)


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def iter_stopping_index_tuples(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    kind: Kind = Kind.LAMBDA,
    lower: RandomInstant | None = None,
    scope: frozenset[int] | None = None,
    guard: int | None = DEFAULT_GUARD,
) -> Iterator[tuple[int, ...]]:
    """Yield stopping times as index tuples; n_instants stands for TERMINAL.

    Paths outside `scope` are pinned to TERMINAL.  With `lower` set, only
    times with T >= lower per path are produced.  The guard bounds the total
    count before any enumeration happens.
    """
    if guard is not None:
        total = count_stopping_times(lattice, meyer, kind, lower, scope)
        if total > guard:
            raise EnumerationGuardError(
                f"{total} stopping times exceed the guard of {guard}"
            )
    n_paths = lattice.n_paths
    n_inst = lattice.n_instants
    fields = _instant_atom_masks(lattice, meyer, kind)
    low = _lower_indices(lattice, lower)
    scope_mask = (1 << n_paths) - 1 if scope is None else _mask(frozenset(scope))

    assign = [n_inst] * n_paths

    def rec(i: int, active: int) -> Iterator[tuple[int, ...]]:
        if i == n_inst or active == 0:
            yield tuple(assign)
            return
        eligible = []
        for am in fields[i]:
            part = am & active
            if part and all(low[p] <= i for p in _bits(part)):
                eligible.append(part)
        for choice in range(1 << len(eligible)):
            stopped = 0
            for j in range(len(eligible)):
                if choice >> j & 1:
                    stopped |= eligible[j]
            for p in _bits(stopped):
                assign[p] = i
            yield from rec(i + 1, active & ~stopped)
            for p in _bits(stopped):
                assign[p] = n_inst
        return

    yield from rec(0, scope_mask)


def enumerate_stopping_times(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    kind: Kind = Kind.LAMBDA,
    lower: RandomInstant | None = None,
    guard: int | None = DEFAULT_GUARD,
) -> Iterator[RandomInstant]:
    for idx in iter_stopping_index_tuples(lattice, meyer, kind, lower, None, guard):
        yield RandomInstant.from_indices(lattice, idx)


def maximize_over_stopping_times(
    lattice: FilteredLattice,
    meyer: MeyerStructure,
    weights: Sequence[Sequence[Fraction]],
    terminal_weights: Sequence[Fraction],
    kind: Kind = Kind.LAMBDA,
    lower: RandomInstant | None = None,
    guard: int | None = DEFAULT_GUARD,
) -> tuple[Fraction, list[tuple[int, ...]]]:
    """Maximize sum_p weights[p][T(p)] over all stopping times.

    `weights[p][i]` is the probability-weighted contribution of stopping
    path p at instant index i; `terminal_weights[p]` covers TERMINAL.
    Partial sums ride along the recursion so shared prefixes are costed
    once.  Returns the exact maximum and all maximizers in canonical
    (index-tuple) order.
    """
    if guard is not None:
        total = count_stopping_times(lattice, meyer, kind, lower)
        if total > guard:
            raise EnumerationGuardError(
                f"{total} stopping times exceed the guard of {guard}"
            )
    n_paths = lattice.n_paths
    n_inst = lattice.n_instants
    fields = _instant_atom_masks(lattice, meyer, kind)
    low = _lower_indices(lattice, lower)
    full = (1 << n_paths) - 1

    assign = [n_inst] * n_paths
    best: list[Fraction] = [None]  # type: ignore[list-item]
    argmax: list[tuple[int, ...]] = []

    term_total = {0: Fraction(0)}

    def terminal_sum(active: int) -> Fraction:
        got = term_total.get(active)
        if got is None:
            got = sum((terminal_weights[p] for p in _bits(active)), Fraction(0))
            term_total[active] = got
        return got

    def rec(i: int, active: int, acc: Fraction) -> None:
        if i == n_inst or active == 0:
            value = acc + terminal_sum(active)
            if best[0] is None or value > best[0]:
                best[0] = value
                argmax.clear()
                argmax.append(tuple(assign))
            elif value == best[0]:
                argmax.append(tuple(assign))
            return
        eligible = []
        for am in fields[i]:
            part = am & active
            if part and all(low[p] <= i for p in _bits(part)):
                eligible.append(part)
        gains = [
            sum((weights[p][i] for p in _bits(part)), Fraction(0))
            for part in eligible
        ]
        for choice in range(1 << len(eligible)):
            stopped = 0
            gain = Fraction(0)
            for j in range(len(eligible)):
                if choice >> j & 1:
                    stopped |= eligible[j]
                    gain += gains[j]
            for p in _bits(stopped):
                assign[p] = i
            rec(i + 1, active & ~stopped, acc + gain)
            for p in _bits(stopped):
                assign[p] = n_inst
        return

    rec(0, full, Fraction(0))
    assert best[0] is not None
    argmax.sort()
    return best[0], argmax
