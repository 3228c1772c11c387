"""Uniform 1/N grids on probability simplexes and on local-policy tables."""

from __future__ import annotations

from functools import cached_property
from math import comb

import numpy as np

from .core import ContractViolation

# Distances within this slack count as ties and go to the lowest index.
TIE_ATOL = 1e-12


def compositions(total: int, parts: int) -> np.ndarray:
    """All weak compositions of ``total`` into ``parts`` parts.

    Rows are ordered lexicographically: ascending first coordinate, then
    ascending second, and so on.
    """
    if parts < 1 or total < 0:
        raise ContractViolation(f"bad composition request total={total} parts={parts}")
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = compositions(total - first, parts - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(blocks)


def _argmin_first(dist: np.ndarray) -> int:
    return int(np.flatnonzero(dist <= dist.min() + TIE_ATOL)[0])


class SimplexGrid:
    """Points of the simplex over ``dimension`` elements with weights in multiples of 1/resolution."""

    kind = "simplex"

    def __init__(self, dimension: int, resolution: int):
        if dimension < 1 or resolution < 1:
            raise ContractViolation("dimension and resolution must be positive")
        self.dimension = dimension
        self.resolution = resolution
        self.counts = compositions(resolution, dimension)
        self.points = self.counts / resolution
        self._lookup = {tuple(row): i for i, row in enumerate(self.counts.tolist())}

    def __len__(self) -> int:
        return len(self.counts)

    def __repr__(self) -> str:
        return f"SimplexGrid(dimension={self.dimension}, resolution={self.resolution})"

    @staticmethod
    def expected_size(dimension: int, resolution: int) -> int:
        return comb(resolution + dimension - 1, dimension - 1)

    def point(self, index: int) -> np.ndarray:
        return self.points[index]

    def index(self, counts) -> int:
        return self._lookup[tuple(int(c) for c in counts)]

    def project(self, mu) -> int:
        """Index of the grid point nearest to ``mu`` in L1, lowest index on ties."""
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.dimension,):
            raise ContractViolation(f"expected shape ({self.dimension},), got {mu.shape}")
        return _argmin_first(np.abs(self.points - mu).sum(axis=1))

    def project_many(self, mus: np.ndarray) -> np.ndarray:
        mus = np.asarray(mus, dtype=float)
        dist = np.abs(mus[:, None, :] - self.points[None, :, :]).sum(axis=2)
        best = dist.min(axis=1, keepdims=True)
        return np.argmax(dist <= best + TIE_ATOL, axis=1)


class DiracGrid:
    """Vertices of the simplex only: a population sitting on one common state.

    Shares the :class:`SimplexGrid` interface so tables over Dirac masses
    persist the same way.
    """

    kind = "dirac"

    def __init__(self, dimension: int, resolution: int = 1):
        self.dimension = dimension
        self.resolution = resolution
        self.counts = np.eye(dimension, dtype=np.int64) * resolution
        self.points = np.eye(dimension)

    def __len__(self) -> int:
        return self.dimension

    def __repr__(self) -> str:
        return f"DiracGrid(dimension={self.dimension})"

    def point(self, index: int) -> np.ndarray:
        return self.points[index]

    def index(self, counts) -> int:
        counts = np.asarray(counts)
        return int(np.flatnonzero(counts)[0])

    def project(self, mu) -> int:
        # L1 distance to a vertex is 2 * (1 - mu(s)).
        mu = np.asarray(mu, dtype=float)
        return _argmin_first(1.0 - mu)


class PolicyGrid:
    """Local policies whose every row lies on a :class:`SimplexGrid` over actions.

    Cells enumerate the Cartesian product of rows with state 0 most
    significant, so the order is lexicographic in the row indices.
    """

    kind = "policy"

    def __init__(self, num_states: int, num_actions: int, resolution: int):
        self.num_states = num_states
        self.num_actions = num_actions
        self.resolution = resolution
        self.row_grid = SimplexGrid(num_actions, resolution)
        self._radix = len(self.row_grid) ** np.arange(num_states - 1, -1, -1)

    def __len__(self) -> int:
        return len(self.row_grid) ** self.num_states

    def __repr__(self) -> str:
        return f"PolicyGrid(num_states={self.num_states}, num_actions={self.num_actions}, resolution={self.resolution})"

    def row_indices(self, cell: int) -> tuple[int, ...]:
        n = len(self.row_grid)
        out = []
        for _ in range(self.num_states):
            cell, r = divmod(cell, n)
            out.append(r)
        return tuple(reversed(out))

    def index(self, rows) -> int:
        return int(np.dot(self._radix, rows))

    def policy(self, cell: int) -> np.ndarray:
        return self.row_grid.points[list(self.row_indices(cell))]

    def cell_counts(self, cell: int) -> np.ndarray:
        return self.row_grid.counts[list(self.row_indices(cell))].reshape(-1)

    @cached_property
    def policies(self) -> np.ndarray:
        """All grid policies as an array of shape ``(len(self), S, A)``."""
        if len(self) > 5_000_000:
            raise ContractViolation(f"{len(self)} policy cells is too many to materialize")
        grids = np.meshgrid(*[np.arange(len(self.row_grid))] * self.num_states, indexing="ij")
        rows = np.stack([g.reshape(-1) for g in grids], axis=1)
        return self.row_grid.points[rows]

    def project(self, h) -> int:
        """Row-wise L1 projection; the separable sum makes this the joint argmin."""
        h = np.asarray(h, dtype=float)
        if h.shape != (self.num_states, self.num_actions):
            raise ContractViolation(f"expected shape ({self.num_states}, {self.num_actions}), got {h.shape}")
        return self.index([self.row_grid.project(row) for row in h])
