"""Interaction potentials, Euclidean embeddings and the regularizer integrand."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .projections import project_envelope

ATOL = 1e-12


class MetricError(ValueError):
    """A candidate interaction potential violates a metric axiom.

    ``axiom`` is one of ``"shape"``, ``"zero-diagonal"``, ``"nonnegative"``,
    ``"symmetry"``, ``"positivity"`` or ``"triangle"``; ``indices`` is the
    witness (a pair, or a triple ``(i, j, k)`` with ``d(i,k) > d(i,j)+d(j,k)``).
    """

    def __init__(self, axiom: str, indices: tuple[int, ...] = ()):
        self.axiom = axiom
        self.indices = indices
        where = f" at {indices}" if indices else ""
        super().__init__(f"not a metric: {axiom} violated{where}")


@dataclass(frozen=True, eq=False)
class Metric:
    """Validated distance matrix between ``l`` labels."""

    D: np.ndarray

    @property
    def l(self) -> int:
        return self.D.shape[0]

    def scaled(self, lam: float) -> "Metric":
        return Metric(lam * self.D)

    def to_json(self) -> dict:
        return {"l": self.l, "metric": self.D.tolist()}


def validate_metric(D, allow_zero: bool = False) -> Metric:
    """Check the metric axioms and return a :class:`Metric`, or raise :class:`MetricError`.

    With ``allow_zero`` distinct labels may have distance zero (pseudometric);
    those are merged upstream before solving.
    """
    D = np.array(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] < 2:
        raise MetricError("shape")
    l = D.shape[0]
    for i in range(l):
        if abs(D[i, i]) > ATOL:
            raise MetricError("zero-diagonal", (i, i))
    for i in range(l):
        for j in range(l):
            if D[i, j] < -ATOL:
                raise MetricError("nonnegative", (i, j))
            if abs(D[i, j] - D[j, i]) > ATOL:
                raise MetricError("symmetry", (min(i, j), max(i, j)))
            if not allow_zero and i != j and D[i, j] <= ATOL:
                raise MetricError("positivity", (i, j))
    # d(i,k) <= d(i,j) + d(j,k), vectorized over k
    for i in range(l):
        for j in range(l):
            bad = np.nonzero(D[i] > D[i, j] + D[j] + ATOL)[0]
            if bad.size:
                raise MetricError("triangle", (i, j, int(bad[0])))
    return Metric(D)


def potts(l: int) -> Metric:
    return validate_metric(1.0 - np.eye(l))


def linear(l: int, c: float = 1.0) -> Metric:
    idx = np.arange(l)
    return validate_metric(c * np.abs(idx[:, None] - idx[None, :]))


def truncated_linear(l: int, c: float = 1.0, cap: float = 2.0) -> Metric:
    """``d(i,j) = c min(|i-j|, cap)``."""
    idx = np.arange(l)
    return validate_metric(c * np.minimum(np.abs(idx[:, None] - idx[None, :]), cap))


def build_named_potential(name: str, l: int, **params) -> Metric:
    builders = {"potts": potts, "linear": linear, "truncated_linear": truncated_linear}
    key = name.lower().replace("-", "_")
    if key not in builders:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(builders)}")
    if l < 2:
        raise ValueError("need at least two labels")
    return builders[key](l, **params)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Columns ``a^i`` of ``A`` (k x l) realize the source metric up to ``eps``."""

    A: np.ndarray
    eps: float = 0.0
    source: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def l(self) -> int:
        return self.A.shape[1]

    def distances(self) -> np.ndarray:
        diff = self.A[:, :, None] - self.A[:, None, :]
        return np.sqrt(np.sum(diff * diff, axis=0))

    def scaled(self, lam: float) -> "EmbeddingMatrix":
        src = None if self.source is None else lam * self.source
        return EmbeddingMatrix(lam * self.A, lam * self.eps, src)

    def to_json(self) -> dict:
        out = {"l": self.l, "k": self.k, "eps_E": self.eps, "A": self.A.tolist()}
        if self.source is not None:
            out["metric"] = self.source.tolist()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "EmbeddingMatrix":
        src = data.get("metric")
        return cls(np.array(data["A"], dtype=float), float(data.get("eps_E", 0.0)),
                   None if src is None else np.array(src, dtype=float))


def embedding_error(A: np.ndarray, D: np.ndarray) -> float:
    """Largest pairwise error ``| ||a^i - a^j|| - d(i,j) |``."""
    return float(np.max(np.abs(EmbeddingMatrix(A).distances() - D)))


def exact_embedding(name: str, l: int, c: float = 1.0) -> EmbeddingMatrix:
    """Closed-form embeddings of the Potts and linear metrics."""
    key = name.lower()
    if key == "potts":
        return EmbeddingMatrix(np.eye(l) / np.sqrt(2.0), 0.0, potts(l).D)
    if key == "linear":
        return EmbeddingMatrix(c * np.arange(1, l + 1, dtype=float)[None, :], 0.0, linear(l, c).D)
    raise ValueError(f"no exact embedding for {name!r}")


def classical_scaling_embed(metric: Metric, rel_cutoff: float = 1e-12) -> EmbeddingMatrix:
    """Euclidean embedding by classical scaling with the negative spectrum clipped."""
    D = metric.D
    l = metric.l
    C = np.eye(l) - np.ones((l, l)) / l
    T = -0.5 * C @ (D * D) @ C
    lam, Q = np.linalg.eigh(0.5 * (T + T.T))
    keep = lam > rel_cutoff * np.max(np.abs(lam))
    A = (np.sqrt(lam[keep])[:, None] * Q[:, keep].T)[::-1]  # largest first
    return EmbeddingMatrix(A, embedding_error(A, D), D.copy())


@dataclass(frozen=True)
class Envelope:
    metric: Metric


@dataclass(frozen=True)
class Euclidean:
    embedding: EmbeddingMatrix


@dataclass(frozen=True)
class RegularizerSpec:
    """Regularizer choice and weight.

    The weight is folded into the metric or embedding by :meth:`scaled_metric`
    and :meth:`scaled_A`; solvers only use those.
    """

    variant: Union[Envelope, Euclidean]
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"regularization weight must be positive, got {self.lam}")

    @property
    def is_envelope(self) -> bool:
        return isinstance(self.variant, Envelope)

    @property
    def l(self) -> int:
        v = self.variant
        return v.metric.l if isinstance(v, Envelope) else v.embedding.l

    @property
    def k(self) -> int:
        v = self.variant
        return v.metric.l if isinstance(v, Envelope) else v.embedding.k

    def scaled_metric(self) -> np.ndarray:
        if self.is_envelope:
            return self.lam * self.variant.metric.D
        return self.lam * self.variant.embedding.distances()

    def scaled_A(self) -> np.ndarray | None:
        """Weighted embedding matrix, or None for the envelope (``L = Grad``)."""
        if self.is_envelope:
            return None
        return self.lam * self.variant.embedding.A


def psi_euclidean(z: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``||z A^T||_F`` for each trailing ``d x l`` block of ``z``."""
    zA = np.asarray(z, dtype=float) @ np.asarray(A, dtype=float).T
    return np.sqrt(np.sum(zA * zA, axis=(-2, -1)))


def psi_envelope_lower_bound(
    z: np.ndarray,
    D: np.ndarray,
    tau: float = 2.0,
    iters: int = 500,
    tol: float = 1e-6,
    max_sweeps: int = 200,
) -> np.ndarray:
    """Lower bound on the envelope integrand ``max_{v in D_loc} <z, v>``.

    Gradient projection ``v <- P(v + tau z)`` started at ``v = z``; the best
    inner product over the projected iterates is returned per block. The
    bound is exact up to the accuracy of the inner Dykstra projection.
    """
    if iters < 1 or not tau > 0:
        raise ValueError("need iters >= 1 and tau > 0")
    z = np.asarray(z, dtype=float)
    v = z.copy()
    best = np.full(z.shape[:-2], -np.inf)
    for _ in range(iters):
        v = project_envelope(v + tau * z, D, tol, max_sweeps)
        best = np.maximum(best, np.sum(z * v, axis=(-2, -1)))
    return best


def alpha_d(D: np.ndarray) -> float:
    """Radius bound ``min_i (sum_j d(i,j)^2)^(1/2)`` of the envelope set."""
    D = np.asarray(D, dtype=float)
    return float(np.min(np.sqrt(np.sum(D * D, axis=1))))


def load_metric(path: str | Path) -> Metric:
    """Read a distance matrix from JSON (``{"metric": [[...]]}`` or a bare list)."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["metric"]
    return validate_metric(data)
