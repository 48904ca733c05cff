"""Finite differences on regular grids and the DCT-based solver for (I + L^T L).

Fields are stored pixel-major: a primal field is an ``(n, l)`` array whose
rows follow the C-order (lexicographic) flattening of the grid, and a dual
field is an ``(n, d, k)`` array holding one ``d x k`` Jacobian block per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft


@dataclass(frozen=True)
class Grid:
    """Regular d-dimensional pixel lattice with unit spacing."""

    dims: tuple[int, ...]

    def __init__(self, dims: Sequence[int] | int):
        if isinstance(dims, (int, np.integer)):
            dims = (int(dims),)
        dims = tuple(int(m) for m in dims)
        if not dims or any(m < 1 for m in dims):
            raise ValueError(f"grid dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def d(self) -> int:
        return len(self.dims)

    def coords(self) -> np.ndarray:
        """Integer pixel coordinates, shape ``(n, d)``, lexicographic order."""
        mesh = np.meshgrid(*[np.arange(m) for m in self.dims], indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)


def gradient(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Forward differences with Neumann boundary, ``(n, l) -> (n, d, l)``."""
    l = u.shape[1]
    uu = u.reshape(*grid.dims, l)
    out = np.zeros((grid.d,) + uu.shape, dtype=np.result_type(u, float))
    for a in range(grid.d):
        if grid.dims[a] < 2:
            continue
        lo = [slice(None)] * uu.ndim
        lo[a] = slice(0, -1)
        out[a][tuple(lo)] = np.diff(uu, axis=a)
    return np.moveaxis(out.reshape(grid.d, grid.n, l), 0, 1)


def divergence(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Backward differences with Dirichlet boundary; exactly ``-gradient^T``."""
    k = v.shape[2]
    out = np.zeros((*grid.dims, k), dtype=np.result_type(v, float))
    for a in range(grid.d):
        m = grid.dims[a]
        if m < 2:
            continue
        p = v[:, a, :].reshape(*grid.dims, k)
        sl = [slice(None)] * p.ndim

        def part(s):
            sl[a] = s
            return tuple(sl)

        # interior p_i - p_{i-1}; p_{m-1} is never produced by the gradient
        out[part(slice(0, 1))] += p[part(slice(0, 1))]
        out[part(slice(1, m - 1))] += p[part(slice(1, m - 1))] - p[part(slice(0, m - 2))]
        out[part(slice(m - 1, m))] -= p[part(slice(m - 2, m - 1))]
    return out.reshape(grid.n, k)


def laplacian_spectrum(grid: Grid) -> np.ndarray:
    """Eigenvalues of ``grad^T grad`` in the DCT-2 basis, flattened like the grid."""
    c = np.zeros(grid.dims)
    for a, m in enumerate(grid.dims):
        shape = [1] * grid.d
        shape[a] = m
        c = c + (2.0 - 2.0 * np.cos(np.pi * np.arange(m) / m)).reshape(shape)
    return c.ravel()


def dct2(x: np.ndarray, grid: Grid, inverse: bool = False) -> np.ndarray:
    """Orthonormal separable DCT-2 of one or more channels.

    ``x`` has shape ``(n,)`` or ``(n, l)``; the transform acts over the grid
    axes only, and the inverse is the transpose.
    """
    single = x.ndim == 1
    xs = x.reshape(*grid.dims, 1 if single else x.shape[1])
    axes = tuple(range(grid.d))
    if inverse:
        y = fft.idctn(xs, type=2, axes=axes, norm="ortho")
    else:
        y = fft.dctn(xs, type=2, axes=axes, norm="ortho")
    return y.reshape(x.shape)


def gram_eigen(A: np.ndarray | None, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition ``A^T A = Q diag(a) Q^T``; identity when ``A`` is None.

    Returns ``(a, Q)`` with ``Q`` orthogonal and its columns the eigenvectors
    (``Q = V^T`` in the row-vector convention).
    """
    if A is None:
        return np.ones(l), np.eye(l)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != l:
        raise ValueError(f"embedding has shape {A.shape}, expected (k, {l})")
    a, Q = np.linalg.eigh(A.T @ A)
    return np.clip(a, 0.0, None), Q


class SpectralSolver:
    """Applies ``(I + L^T L)^{-1}`` for ``L = A (x) grad`` via DCT diagonalization."""

    def __init__(self, grid: Grid, l: int, A: np.ndarray | None = None):
        self.grid = grid
        self.l = l
        a, self.Q = gram_eigen(A, l)
        c = laplacian_spectrum(grid)
        self.denom = 1.0 + c[:, None] * a[None, :]

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        if rhs.shape != (self.grid.n, self.l):
            raise ValueError(f"rhs has shape {rhs.shape}, expected {(self.grid.n, self.l)}")
        y = dct2(rhs @ self.Q, self.grid)
        y = dct2(y / self.denom, self.grid, inverse=True)
        return y @ self.Q.T


def solve_identity_plus_LtL(rhs: np.ndarray, grid: Grid, A: np.ndarray | None = None) -> np.ndarray:
    """One-shot version of :class:`SpectralSolver`."""
    return SpectralSolver(grid, rhs.shape[1], A)(rhs)


def operator_norm_bound(d: int, A: np.ndarray | None = None) -> float:
    """Analytic bound ``2 sqrt(d) ||A||_2`` on the norm of ``L`` (``A = I`` if None)."""
    bound = 2.0 * np.sqrt(d)
    if A is not None:
        bound *= np.linalg.norm(np.asarray(A, dtype=float), 2)
    return float(bound)


def dense_gradient(grid: Grid) -> np.ndarray:
    """Explicit ``(n d, n)`` matrix of ``grad``; rows ordered (pixel, axis).

    Intended for tests and small reference computations.
    """
    eye = np.eye(grid.n)
    G = gradient(eye, grid)  # (n, d, n): column j is grad of e_j
    return G.reshape(grid.n * grid.d, grid.n)
