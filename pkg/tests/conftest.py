from __future__ import annotations

from fractions import Fraction

import pytest

from meyerstop.lattice import (
    FilteredLattice,
    MeyerStructure,
    PathRecord,
    make_partition,
)


def build_lattice(probs, filtration_atoms, meyer_atoms, initial_atoms=None):
    """Small helper: atoms are lists of lists of path indices."""
    paths = tuple(
        PathRecord(f"p{i}", Fraction(p)) for i, p in enumerate(probs)
    )
    lattice = FilteredLattice(
        epoch_count=len(filtration_atoms) - 1,
        paths=paths,
        filtration=tuple(make_partition(a) for a in filtration_atoms),
        initial_field=make_partition(initial_atoms) if initial_atoms else None,
    )
    meyer = MeyerStructure(
        meyer_fields=tuple(make_partition(a) for a in meyer_atoms)
    )
    return lattice, meyer


@pytest.fixture
def branch():
    """Two equal paths, one branch at epoch 1, fully revealing structure."""
    return build_lattice(
        ["1/2", "1/2"],
        [[[0, 1]], [[0], [1]]],
        [[[0, 1]], [[0], [1]]],
    )


@pytest.fixture
def branch_blind():
    """Same tree but the grid point at epoch 1 is still blind (G_1 trivial)."""
    return build_lattice(
        ["1/2", "1/2"],
        [[[0, 1]], [[0], [1]]],
        [[[0, 1]], [[0, 1]]],
    )


@pytest.fixture
def chain():
    """Single path over two epochs: the deterministic five-instant chain."""
    return build_lattice(["1"], [[[0]], [[0]]], [[[0]], [[0]]])


@pytest.fixture
def three_path():
    """Weights (1/2, 1/4, 1/4); epoch-1 split {0} vs {1,2}, epoch-2 full."""
    return build_lattice(
        ["1/2", "1/4", "1/4"],
        [[[0, 1, 2]], [[0], [1, 2]], [[0], [1], [2]]],
        [[[0, 1, 2]], [[0], [1, 2]], [[0], [1], [2]]],
    )


@pytest.fixture
def three_path_meyer():
    """Same tree with a strictly intermediate Meyer structure at epoch 2."""
    return build_lattice(
        ["1/2", "1/4", "1/4"],
        [[[0, 1, 2]], [[0], [1, 2]], [[0], [1], [2]]],
        [[[0, 1, 2]], [[0, 1, 2]], [[0], [1, 2]]],
    )
