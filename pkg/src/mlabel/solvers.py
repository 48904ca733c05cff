"""First-order solvers for the bilinear saddle-point labeling problem

    min_{u in C} max_{v in D}  <u, s> + <L u, v> - <b, v>

with ``C`` the pixelwise simplex constraint and ``D`` the product of local
dual sets. ``L`` is ``Grad`` for the envelope regularizer and
``(A (x) grad)`` for the Euclidean one.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .grid import Grid, SpectralSolver, divergence, gradient, operator_norm_bound
from .potentials import RegularizerSpec, alpha_d, psi_envelope_lower_bound
from .projections import project_dual_field, project_simplex

LOG_COLUMNS = ("iter", "seconds", "primal", "dual", "gap", "rel_gap")
LOG_FORMAT_VERSION = 1


@dataclass
class SaddleProblem:
    """Data term ``s`` (n x l), regularizer and optional dual offset ``b`` (n x d x k)."""

    grid: Grid
    s: np.ndarray
    reg: RegularizerSpec
    b: np.ndarray | None = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if self.s.shape != (self.grid.n, self.reg.l):
            raise ValueError(f"data term has shape {self.s.shape}, expected {(self.grid.n, self.reg.l)}")
        if not np.all(np.isfinite(self.s)):
            raise ValueError("data term must be finite")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=float)
            if self.b.shape != self.dual_shape:
                raise ValueError(f"b has shape {self.b.shape}, expected {self.dual_shape}")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def l(self) -> int:
        return self.reg.l

    @property
    def k(self) -> int:
        return self.reg.k

    @property
    def dual_shape(self) -> tuple[int, int, int]:
        return (self.grid.n, self.grid.d, self.k)

    @cached_property
    def A(self) -> np.ndarray | None:
        return self.reg.scaled_A()

    @cached_property
    def metric(self) -> np.ndarray:
        return self.reg.scaled_metric()

    @cached_property
    def norm_bound(self) -> float:
        return operator_norm_bound(self.grid.d, self.A)

    @cached_property
    def inverse(self) -> SpectralSolver:
        return SpectralSolver(self.grid, self.l, self.A)

    def L(self, u: np.ndarray) -> np.ndarray:
        if self.A is not None:
            u = u @ self.A.T
        return gradient(u, self.grid)

    def Lt(self, v: np.ndarray) -> np.ndarray:
        out = -divergence(v, self.grid)
        if self.A is not None:
            out = out @ self.A
        return out

    def b_or_zero(self) -> np.ndarray:
        return np.zeros(self.dual_shape) if self.b is None else self.b

    def project_C(self, u: np.ndarray) -> np.ndarray:
        return project_simplex(u)

    def project_D(self, v: np.ndarray, tol: float = 1e-2, max_iter: int = 50) -> np.ndarray:
        return project_dual_field(v, self.reg, tol, max_iter)

    def dense_L(self) -> np.ndarray:
        """Explicit matrix of ``L`` acting on ``u.ravel()``; small problems only."""
        eye = np.eye(self.n * self.l).reshape(-1, self.n, self.l)
        cols = [self.L(e).ravel() for e in eye]
        return np.stack(cols, axis=1)


class Termination(str, enum.Enum):
    GAP_REACHED = "gap_reached"
    MAX_ITER = "max_iter"
    DUAL_PLATEAU = "dual_plateau"


@dataclass
class SolverConfig:
    """Shared and per-method solver settings.

    ``tau_p``/``tau_d`` are the FPD steps, ``tau`` the Douglas-Rachford step
    and ``nesterov_iters`` the fixed horizon N of the Nesterov method (runs
    N+1 iterations; defaults to ``max_iter - 1``).
    """

    max_iter: int = 1000
    rel_gap_tol: float = 1e-4
    eval_every: int = 10
    tau_p: float | None = None
    tau_d: float | None = None
    tau: float = 1.0
    nesterov_iters: int | None = None
    dykstra_tol: float = 1e-2
    dykstra_max_iter: int = 50
    plateau_tol: float = 1e-8
    plateau_window: int = 50
    u0: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.max_iter < 1 or self.eval_every < 1:
            raise ValueError("max_iter and eval_every must be positive")
        if not self.tau > 0:
            raise ValueError("Douglas-Rachford step must be positive")


@dataclass
class SolverReport:
    u: np.ndarray
    v: np.ndarray
    log: list[tuple] = field(default_factory=list)
    termination: Termination = Termination.MAX_ITER
    iterations: int = 0
    method: str = ""
    norm_bound: float = math.nan
    a_priori_bound: float | None = None

    @property
    def final(self) -> dict:
        if not self.log:
            return {}
        return dict(zip(LOG_COLUMNS, self.log[-1]))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# mlabel convergence log v{LOG_FORMAT_VERSION}; method={self.method}\n")
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for row in self.log:
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])

    def summary(self) -> dict:
        fin = self.final
        out = {
            "method": self.method,
            "termination": self.termination.value,
            "iterations": self.iterations,
            "norm_bound": self.norm_bound,
        }
        for key in ("primal", "dual", "gap", "rel_gap"):
            val = fin.get(key, math.nan)
            out[key] = None if math.isnan(val) else val
        if self.a_priori_bound is not None:
            out["a_priori_bound"] = self.a_priori_bound
        return out

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2))


def read_log_csv(path: str | Path) -> list[tuple]:
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if tuple(header) != LOG_COLUMNS:
        raise ValueError(f"unexpected log header {header}")
    for rec in reader:
        rows.append((int(rec[0]),) + tuple(float(x) for x in rec[1:]))
    return rows


# -- objectives ---------------------------------------------------------------


def primal_objective(u: np.ndarray, p: SaddleProblem, envelope_iters: int = 200) -> float:
    """``<u, s> + sigma_D(L u - b)``.

    Exact for the Euclidean regularizer. For the envelope regularizer only a
    lower bound is available (gradient projection per pixel); use
    :func:`primal_is_exact` before trusting it as an upper bound.
    """
    w = p.L(u)
    if p.b is not None:
        w = w - p.b
    data = float(np.sum(u * p.s))
    if not p.reg.is_envelope:
        return data + float(np.sum(np.sqrt(np.sum(w * w, axis=(1, 2)))))
    psi = psi_envelope_lower_bound(w, p.metric, iters=envelope_iters)
    return data + float(np.sum(psi))


def primal_is_exact(p: SaddleProblem) -> bool:
    return not p.reg.is_envelope


def dual_objective(v: np.ndarray, p: SaddleProblem) -> float:
    """``-<b, v> + sum_x min_i (L^T v + s)_{x,i}``."""
    val = float(np.sum(np.min(p.Lt(v) + p.s, axis=1)))
    if p.b is not None:
        val -= float(np.sum(p.b * v))
    return val


def gap(u: np.ndarray, v: np.ndarray, p: SaddleProblem) -> tuple[float, float]:
    """Primal-dual gap and relative gap (gap / |dual|); NaN for the envelope regularizer."""
    if not primal_is_exact(p):
        return math.nan, math.nan
    fp, fd = primal_objective(u, p), dual_objective(v, p)
    g = fp - fd
    return g, _relative(g, fd)


def _relative(g: float, fd: float) -> float:
    return g / abs(fd) if fd != 0 else g


class _Monitor:
    """Evaluates objectives on a fixed cadence and decides termination."""

    def __init__(self, p: SaddleProblem, cfg: SolverConfig):
        self.p, self.cfg = p, cfg
        self.exact = primal_is_exact(p)
        self.log: list[tuple] = []
        self.duals: dict[int, float] = {}
        self.t0 = time.perf_counter()
        self.termination = Termination.MAX_ITER

    def due(self, it: int) -> bool:
        return it % self.cfg.eval_every == 0 or it == self.cfg.max_iter

    def record(self, it: int, u: np.ndarray, v: np.ndarray) -> bool:
        """Log iteration ``it``; return True when a stopping rule fires."""
        fd = dual_objective(v, self.p)
        if self.exact:
            fp = primal_objective(u, self.p)
            g = fp - fd
            rel = _relative(g, fd)
        else:
            fp = g = rel = math.nan
        self.log.append((it, time.perf_counter() - self.t0, fp, fd, g, rel))
        if self.exact:
            if rel <= self.cfg.rel_gap_tol:
                self.termination = Termination.GAP_REACHED
                return True
            return False
        self.duals[it] = fd
        past = self.duals.get(it - self.cfg.plateau_window)
        if past is not None and abs(fd - past) <= self.cfg.plateau_tol * max(abs(fd), 1e-300):
            self.termination = Termination.DUAL_PLATEAU
            return True
        return False


def _uniform(p: SaddleProblem, cfg: SolverConfig) -> np.ndarray:
    if cfg.u0 is not None:
        return np.array(cfg.u0, dtype=float).reshape(p.n, p.l)
    return np.full((p.n, p.l), 1.0 / p.l)


# -- Fast primal-dual ---------------------------------------------------------


def fpd_default_steps(C: float) -> tuple[float, float]:
    t = 1.0 / (C * (1.0 + 1e-6))
    return t, t


def solve_fpd(p: SaddleProblem, cfg: SolverConfig) -> SolverReport:
    """Fast primal-dual (extrapolated Arrow-Hurwicz) iteration."""
    C = p.norm_bound
    tp, td = fpd_default_steps(C)
    tp = cfg.tau_p if cfg.tau_p is not None else tp
    td = cfg.tau_d if cfg.tau_d is not None else td
    if not (tp > 0 and td > 0 and tp * td * C * C < 1.0):
        raise ValueError(f"FPD steps violate tau_p*tau_d < 1/C^2 (C = {C:.6g})")
    b = p.b_or_zero()
    u = _uniform(p, cfg)
    ubar = u.copy()
    v = np.zeros(p.dual_shape)
    mon = _Monitor(p, cfg)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        v = p.project_D(v + td * (p.L(ubar) - b), cfg.dykstra_tol, cfg.dykstra_max_iter)
        u_new = p.project_C(u - tp * (p.Lt(v) + p.s))
        ubar = 2.0 * u_new - u
        u = u_new
        if mon.due(it) and mon.record(it, u, v):
            break
    return SolverReport(u, v, mon.log, mon.termination, it, "fpd", C)


# -- Nesterov -----------------------------------------------------------------


def nesterov_radii(p: SaddleProblem) -> tuple[float, float]:
    """Radii ``r1`` (around the uniform labeling) and ``r2`` (around 0) of C and D."""
    r1 = math.sqrt(p.n * (p.l - 1) / p.l)
    if p.reg.is_envelope:
        r2 = alpha_d(p.metric) * math.sqrt(p.n)
    else:
        r2 = math.sqrt(p.n)
    return r1, r2


def nesterov_bound(p: SaddleProblem, N: int) -> float:
    """A priori gap bound ``2 r1 r2 C / (N + 1)`` for the final iterates."""
    r1, r2 = nesterov_radii(p)
    return 2.0 * r1 * r2 * p.norm_bound / (N + 1)


def solve_nesterov(p: SaddleProblem, cfg: SolverConfig) -> SolverReport:
    """Nesterov smoothing with a fixed horizon N (N+1 iterations, no early exit).

    ``C`` is the analytic operator norm bound and is used wherever ``||L||``
    enters the step sizes.
    """
    N = cfg.nesterov_iters if cfg.nesterov_iters is not None else cfg.max_iter - 1
    if N < 0:
        raise ValueError("Nesterov horizon must be nonnegative")
    C = p.norm_bound
    r1, r2 = nesterov_radii(p)
    mu = 2.0 * C / (N + 1) * r1 / r2
    step = mu / C**2
    b = p.b_or_zero()
    c1 = np.full((p.n, p.l), 1.0 / p.l)
    x = _uniform(p, cfg)
    w = np.zeros(p.dual_shape)
    Gsum = np.zeros((p.n, p.l))
    u = x
    v = w
    mon = _Monitor(p, cfg)
    mon.cfg = replace(cfg, max_iter=N + 1)
    for k in range(N + 1):
        V = p.project_D((p.L(x) - b) / mu, cfg.dykstra_tol, cfg.dykstra_max_iter)
        w = w + (k + 1) * V
        v = (2.0 / ((k + 1) * (k + 2))) * w
        G = p.s + p.Lt(V)
        Gsum = Gsum + 0.5 * (k + 1) * G
        u = p.project_C(x - step * G)
        z = p.project_C(c1 - step * Gsum)
        x = (2.0 / (k + 3)) * z + (1.0 - 2.0 / (k + 3)) * u
        if mon.due(k + 1):
            mon.record(k + 1, u, v)
    term = mon.termination
    if mon.exact:
        term = Termination.GAP_REACHED if mon.log[-1][5] <= cfg.rel_gap_tol else Termination.MAX_ITER
    return SolverReport(u, v, mon.log, term, N + 1, "nesterov", C, nesterov_bound(p, N))


# -- Douglas-Rachford ---------------------------------------------------------


@dataclass
class DRState:
    """Iterate of the primal Douglas-Rachford method (``ubar``, ``wbar``)."""

    ubar: np.ndarray
    wbar: np.ndarray


def dr_step(p: SaddleProblem, st: DRState, tau: float, cfg: SolverConfig):
    """One Douglas-Rachford iteration; returns the feasible pair ``(u, w'')``."""
    b = p.b_or_zero()
    u = p.project_C(st.ubar - tau * p.s)
    w2 = p.project_D((st.wbar - b) / tau, cfg.dykstra_tol, cfg.dykstra_max_iter)
    u1 = p.inverse((2.0 * u - st.ubar) + p.Lt(st.wbar - 2.0 * tau * w2))
    st.ubar = st.ubar + u1 - u
    st.wbar = p.L(u1) + tau * w2
    return u, w2


def solve_douglas_rachford(
    p: SaddleProblem, cfg: SolverConfig, state: DRState | None = None, trace: list | None = None
) -> SolverReport:
    """Douglas-Rachford splitting on ``delta_{Lu=w} + (<u,s> + delta_C(u) + sigma_D(w-b))``.

    ``(I + L^T L)^{-1}`` is applied through the DCT. Reports the pair
    ``(u^k, w''^k)``, which is primal/dual feasible. If ``trace`` is a list,
    every ``w''^k`` is appended to it.
    """
    tau = cfg.tau
    if state is None:
        ubar = _uniform(p, cfg)
        state = DRState(ubar, p.L(ubar))
    mon = _Monitor(p, cfg)
    u = v = None
    it = 0
    for it in range(1, cfg.max_iter + 1):
        u, v = dr_step(p, state, tau, cfg)
        if trace is not None:
            trace.append(v.copy())
        if mon.due(it) and mon.record(it, u, v):
            break
    return SolverReport(u, v, mon.log, mon.termination, it, "douglas_rachford", p.norm_bound)


def solve_douglas_rachford_dual(
    p: SaddleProblem,
    cfg: SolverConfig,
    tau_dual: float | None = None,
    vbar0: np.ndarray | None = None,
    zbar0: np.ndarray | None = None,
    dense: bool = False,
    trace: list | None = None,
) -> SolverReport:
    """Douglas-Rachford applied to the dual problem.

    Same iteration as :func:`solve_douglas_rachford` with the roles
    ``u <-> v``, ``C <-> D``, ``s <-> b`` and ``L <-> -L^T`` exchanged.
    ``tau_dual`` defaults to ``1 / cfg.tau`` and the default start is the
    image of the primal method's default start under that coupling, so both
    runs produce the same dual sequence. ``(I + L L^T)^{-1}`` is applied via
    Woodbury and the DCT solver, or by a dense factorization when ``dense``.
    ``trace`` collects every dual iterate ``v^k``.
    """
    td = 1.0 / cfg.tau if tau_dual is None else tau_dual
    if not td > 0:
        raise ValueError("dual step must be positive")
    b = p.b_or_zero()
    if zbar0 is None or vbar0 is None:
        u0 = _uniform(p, cfg)
        zbar0 = td * u0 if zbar0 is None else zbar0
        vbar0 = td * p.L(u0) if vbar0 is None else vbar0
    vbar = np.array(vbar0, dtype=float)
    zbar = np.array(zbar0, dtype=float)

    if dense:
        Lm = p.dense_L()
        fac = cho_factor(np.eye(Lm.shape[0]) + Lm @ Lm.T)

        def inv_LLt(x):
            return cho_solve(fac, x.ravel()).reshape(p.dual_shape)
    else:

        def inv_LLt(x):
            return x - p.L(p.inverse(p.Lt(x)))

    mon = _Monitor(p, cfg)
    v = z2 = None
    it = 0
    for it in range(1, cfg.max_iter + 1):
        v = p.project_D(vbar - td * b, cfg.dykstra_tol, cfg.dykstra_max_iter)
        z2 = p.project_C((zbar - p.s) / td)
        # the dual operator is -L^T, so its adjoint is -L
        v1 = inv_LLt((2.0 * v - vbar) - p.L(zbar - 2.0 * td * z2))
        vbar = vbar + v1 - v
        zbar = -p.Lt(v1) + td * z2
        if trace is not None:
            trace.append(v.copy())
        if mon.due(it) and mon.record(it, z2, v):
            break
    return SolverReport(z2, v, mon.log, mon.termination, it, "douglas_rachford_dual", p.norm_bound)


SOLVERS = {
    "fpd": solve_fpd,
    "nesterov": solve_nesterov,
    "dr": solve_douglas_rachford,
    "douglas_rachford": solve_douglas_rachford,
}
