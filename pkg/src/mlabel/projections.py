"""Orthogonal projections onto the primal simplex set and the local dual sets.

All functions accept batches: the leading axes of the input index independent
problems (pixels), the trailing axes hold one simplex vector or one ``d x l``
dual block.
"""

from __future__ import annotations

from itertools import combinations
from typing import NamedTuple

import numpy as np


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Project each row of ``y`` onto the standard simplex.

    Michelot's finite algorithm: repeatedly shift the free components so they
    sum to one and freeze those that turn negative at zero. At most ``l``
    passes are needed since the frozen set only grows.
    """
    y = np.asarray(y, dtype=float)
    shape = y.shape
    x = y.reshape(-1, shape[-1]).copy()
    l = x.shape[1]
    zero = np.zeros(x.shape, dtype=bool)
    active = np.arange(x.shape[0])
    for _ in range(l):
        if active.size == 0:
            break
        xa, za = x[active], zero[active]
        free = l - za.sum(axis=1)
        shift = (xa.sum(axis=1) - 1.0) / free
        yt = np.where(za, 0.0, xa - shift[:, None])
        neg = yt < 0
        zero[active] = za | neg
        x[active] = np.maximum(yt, 0.0)
        active = active[neg.any(axis=1)]
    return x.reshape(shape)


def project_unit_ball(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Project each trailing ``d x k`` block onto the Frobenius ball."""
    v = np.asarray(v, dtype=float)
    norms = np.sqrt(np.sum(v * v, axis=(-2, -1), keepdims=True))
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return v * scale


def project_pair(v: np.ndarray, i: int, j: int, dij: float) -> np.ndarray:
    """Project onto ``{v : ||v^i - v^j|| <= dij}`` (columns i and j of each block)."""
    if i == j:
        raise ValueError("project_pair needs two distinct labels")
    w = np.array(v, dtype=float, copy=True)
    _pair_step(w, i, j, dij)
    return w


def _pair_step(w: np.ndarray, i: int, j: int, dij: float) -> None:
    diff = w[..., :, i] - w[..., :, j]
    dist = np.sqrt(np.sum(diff * diff, axis=-1, keepdims=True))
    over = dist > dij
    if not np.any(over):
        return
    shift = np.where(over, 0.5 * (dist - dij) / np.where(over, dist, 1.0), 0.0) * diff
    w[..., :, i] -= shift
    w[..., :, j] += shift


def project_zero_sum(v: np.ndarray) -> np.ndarray:
    """Subtract the column mean so that the columns of each block sum to zero."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=-1, keepdims=True)


class DykstraResult(NamedTuple):
    x: np.ndarray
    iterations: int
    delta: float


def label_pairs(l: int) -> list[tuple[int, int]]:
    """Fixed lexicographic visiting order of the pairwise constraints."""
    return list(combinations(range(l), 2))


def dykstra_project(
    v: np.ndarray, D: np.ndarray, tol: float = 1e-2, max_iter: int = 50
) -> DykstraResult:
    """Dykstra's alternating projections onto the pairwise distance constraints.

    ``v`` is a single ``(d, l)`` block or a batch ``(..., d, l)``. Each block
    is iterated independently and frozen once a full sweep moves it by at
    most ``tol`` (Frobenius norm), so batched and per-block calls agree.
    Returns the projected blocks, the largest sweep count used, and the
    largest final sweep change. Hitting ``max_iter`` is not an error.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    v = np.asarray(v, dtype=float)
    D = np.asarray(D, dtype=float)
    shape = v.shape
    dd, l = shape[-2], shape[-1]
    x = v.reshape(-1, dd, l).copy()
    pairs = label_pairs(l)
    if not pairs:
        return DykstraResult(x.reshape(shape), 1, 0.0)
    # correction terms only ever touch columns i and j of their pair
    y = np.zeros((len(pairs), x.shape[0], dd, 2))
    active = np.arange(x.shape[0])
    final_delta = np.zeros(x.shape[0])
    sweeps = 0
    while active.size and sweeps < max_iter:
        sweeps += 1
        xa = x[active]
        before = xa.copy()
        for t, (i, j) in enumerate(pairs):
            yt = y[t, active]
            cols = xa[:, :, [i, j]] + yt
            diff = cols[:, :, 0] - cols[:, :, 1]
            dist = np.sqrt(np.sum(diff * diff, axis=1, keepdims=True))
            over = dist > D[i, j]
            shift = np.where(over, 0.5 * (dist - D[i, j]) / np.where(over, dist, 1.0), 0.0) * diff
            new = cols.copy()
            new[:, :, 0] -= shift
            new[:, :, 1] += shift
            y[t, active] = cols - new
            xa[:, :, i] = new[:, :, 0]
            xa[:, :, j] = new[:, :, 1]
        x[active] = xa
        delta = np.sqrt(np.sum((xa - before) ** 2, axis=(1, 2)))
        final_delta[active] = delta
        active = active[delta > tol]
    return DykstraResult(x.reshape(shape), sweeps, float(final_delta.max(initial=0.0)))


def project_envelope(
    v: np.ndarray, D: np.ndarray, tol: float = 1e-2, max_iter: int = 50
) -> np.ndarray:
    """Approximate projection onto the envelope set: zero-sum after pairwise bounds."""
    return project_zero_sum(dykstra_project(v, D, tol, max_iter).x)


def project_dual_field(v: np.ndarray, reg, tol: float = 1e-2, max_iter: int = 50) -> np.ndarray:
    """Pixelwise projection of an ``(n, d, k)`` dual field onto the product set.

    ``reg`` is a :class:`~mlabel.potentials.RegularizerSpec`: unit balls for the
    Euclidean variant, Dykstra-approximated envelope sets otherwise.
    """
    if reg.is_envelope:
        return project_envelope(v, reg.scaled_metric(), tol, max_iter)
    return project_unit_ball(v)
