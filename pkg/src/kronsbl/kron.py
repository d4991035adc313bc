"""Kronecker-structured linear algebra for uniform-array channel models.

All long vectors in this package are flattenings of rank-3 tensors in C
(row-major) order: for factor sizes (n1, n2, n3) the flat index is
``(i1 * n2 + i2) * n3 + i3``, with i1 slowest.  That convention matches
``np.kron(a, np.kron(b, c))`` and is assumed everywhere a Kronecker
product is applied without being materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigError

# Refuse to materialize dense operators above this entry count (~160 MB
# complex128); paper-scale systems stay well below it.
DENSE_GUARD = 10_000_000


def steering_vector(n_elem: int, psi: float, delta: float = 0.5) -> np.ndarray:
    """Unit-norm uniform-linear-array response for angle ``psi``.

    Element q carries phase ``exp(2j*pi*q*delta*cos(psi))``; the vector is
    scaled by 1/sqrt(n_elem) so its 2-norm is exactly 1.
    """
    if n_elem < 1:
        raise ConfigError(f"steering_vector needs n_elem >= 1, got {n_elem}")
    q = np.arange(n_elem)
    return np.exp(2j * np.pi * q * delta * np.cos(psi)) / np.sqrt(n_elem)


def default_grid(n_points: int) -> np.ndarray:
    """Angular grid with cosines uniform on (-1, 1]: cos(psi_n) = 2n/N - 1.

    n runs 1..N, so cos = +1 is on the grid and cos = -1 is not.  Returned
    as angles (radians), descending cosine corresponds to ascending angle.
    """
    if n_points < 1:
        raise ConfigError(f"default_grid needs n_points >= 1, got {n_points}")
    n = np.arange(1, n_points + 1)
    return np.arccos(2.0 * n / n_points - 1.0)


@dataclass(frozen=True)
class SteeringMatrix:
    """Array response dictionary: one steering vector per grid angle."""

    entries: np.ndarray          # (n_elem, n_grid) complex
    grid: np.ndarray             # (n_grid,) angles in radians
    element_spacing: float

    @property
    def n_elem(self) -> int:
        return self.entries.shape[0]

    @property
    def n_grid(self) -> int:
        return self.entries.shape[1]


def steering_matrix(n_elem: int, grid: np.ndarray, delta: float = 0.5) -> SteeringMatrix:
    """Stack steering vectors for every angle in ``grid`` as columns."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("grid must be a non-empty 1-D array of angles")
    q = np.arange(n_elem)[:, None]
    entries = np.exp(2j * np.pi * q * delta * np.cos(grid)[None, :]) / np.sqrt(n_elem)
    return SteeringMatrix(entries=entries, grid=grid, element_spacing=delta)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Columnwise Kronecker product: column r is kron(a[:, r], b[:, r])."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ConfigError(
            f"khatri_rao needs matching column counts, got {a.shape} and {b.shape}"
        )
    p, r = a.shape
    q = b.shape[0]
    return (a[:, None, :] * b[None, :, :]).reshape(p * q, r)


def kron_vec(parts: list[np.ndarray] | tuple[np.ndarray, ...]) -> np.ndarray:
    """Kronecker product of 1-D vectors, first factor slowest."""
    parts = [np.asarray(p).ravel() for p in parts]
    if not parts:
        raise ConfigError("kron_vec needs at least one factor")
    return reduce(np.kron, parts)


@dataclass(frozen=True)
class KronOperator:
    """Matrix ``factors[0] x factors[1] x ...`` applied without materialization.

    apply() runs one mode product per factor (tensordot, so BLAS does the
    work); cost is sum_j m_j * prod(other dims) instead of the dense
    prod(m_j) * prod(n_j).
    """

    factors: tuple[np.ndarray, ...]
    shape: tuple[int, int] = field(init=False)

    def __post_init__(self):
        if len(self.factors) == 0:
            raise ConfigError("KronOperator needs at least one factor")
        facs = tuple(np.asarray(f) for f in self.factors)
        for f in facs:
            if f.ndim != 2:
                raise ConfigError("KronOperator factors must be 2-D")
        object.__setattr__(self, "factors", facs)
        rows = int(np.prod([f.shape[0] for f in facs]))
        cols = int(np.prod([f.shape[1] for f in facs]))
        object.__setattr__(self, "shape", (rows, cols))

    @property
    def dims_in(self) -> tuple[int, ...]:
        return tuple(f.shape[1] for f in self.factors)

    @property
    def dims_out(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Compute (A1 x A2 x ...) @ x for a flat vector x."""
        x = np.asarray(x)
        if x.shape != (self.shape[1],):
            raise ConfigError(f"operand has shape {x.shape}, expected ({self.shape[1]},)")
        return kron_apply(self.factors, x)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        """Compute (A1 x A2 x ...)^H @ y for a flat vector y."""
        y = np.asarray(y)
        if y.shape != (self.shape[0],):
            raise ConfigError(f"operand has shape {y.shape}, expected ({self.shape[0]},)")
        return kron_apply([f.conj().T for f in self.factors], y)

    def column(self, idx: int) -> np.ndarray:
        """Materialize a single column (kron of the factor columns)."""
        if not 0 <= idx < self.shape[1]:
            raise ConfigError(f"column index {idx} out of range for {self.shape}")
        sub = np.unravel_index(idx, self.dims_in)
        return kron_vec([f[:, j] for f, j in zip(self.factors, sub)])

    def column_norms(self) -> np.ndarray:
        """2-norms of all columns: kron of the per-factor column norms."""
        return kron_vec([np.linalg.norm(f, axis=0) for f in self.factors])

    def dense(self) -> np.ndarray:
        """Materialize the full matrix; refuses above DENSE_GUARD entries."""
        n_entries = self.shape[0] * self.shape[1]
        if n_entries > DENSE_GUARD:
            raise ConfigError(
                f"dense operator would hold {n_entries} entries "
                f"(guard is {DENSE_GUARD}); use apply() instead"
            )
        return reduce(np.kron, self.factors)


def kron_apply(factors, x: np.ndarray) -> np.ndarray:
    """Apply a Kronecker product of matrices to a flat vector.

    Reshapes x to the input tensor shape and runs successive mode
    products.  Factor j may change the size of axis j, so axes are moved
    back in place after each tensordot.
    """
    facs = [np.asarray(f) for f in factors]
    dims_in = tuple(f.shape[1] for f in facs)
    y = np.asarray(x).reshape(dims_in)
    for j, f in enumerate(facs):
        y = np.moveaxis(np.tensordot(f, y, axes=(1, j)), 0, j)
    return y.ravel()
