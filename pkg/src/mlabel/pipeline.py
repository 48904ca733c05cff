"""Problem assembly (data terms, class merging, benchmarks) and binarization.

Labels are 0-based throughout: a discrete labeling is an integer array with
entries in ``0..l-1``, one per pixel in grid order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .potentials import Metric, validate_metric
from .projections import project_envelope
from .solvers import SaddleProblem, dual_objective, primal_is_exact, primal_objective


@dataclass
class LabelSet:
    prototypes: np.ndarray  # (l, channels)
    names: list[str] | None = None

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=float)
        if self.prototypes.ndim == 1:  # gray levels
            self.prototypes = self.prototypes[:, None]
        if self.l < 2:
            raise ValueError("a label set needs at least two prototypes")

    @property
    def l(self) -> int:
        return self.prototypes.shape[0]


def build_l1_data_term(image: np.ndarray, labels: LabelSet) -> np.ndarray:
    """``s_i(x) = ||g(x) - c^i||_1`` for an image of shape ``(*dims)`` or ``(*dims, channels)``."""
    img = np.asarray(image, dtype=float)
    ch = labels.prototypes.shape[1]
    if ch == 1 and (img.ndim < 2 or img.shape[-1] != 1):
        img = img[..., None]
    if img.shape[-1] != ch:
        raise ValueError(f"image has {img.shape[-1]} channels, prototypes have {ch}")
    feats = img.reshape(-1, ch)
    return np.abs(feats[:, None, :] - labels.prototypes[None, :, :]).sum(axis=2)


# -- class collapsing -------------------------------------------------------------


@dataclass
class ClassMap:
    """Groups of original labels merged into each reduced label."""

    groups: list[list[int]]

    @property
    def l_original(self) -> int:
        return sum(len(g) for g in self.groups)

    def expand(self, labels: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Map reduced labels back, picking the cheapest original label in each group."""
        labels = np.asarray(labels)
        out = np.empty_like(labels)
        for r, g in enumerate(self.groups):
            sel = labels == r
            if not np.any(sel):
                continue
            out[sel] = np.asarray(g)[np.argmin(s[sel][:, g], axis=1)]
        return out


def collapse_zero_distance_classes(s: np.ndarray, D) -> tuple[np.ndarray, Metric, ClassMap]:
    """Merge labels at distance zero; merged data term is the elementwise minimum."""
    D = validate_metric(D, allow_zero=True).D
    l = D.shape[0]
    groups: list[list[int]] = []
    seen = set()
    for i in range(l):
        if i in seen:
            continue
        # zero distance is an equivalence relation for a pseudometric
        g = [j for j in range(l) if j not in seen and D[i, j] <= 1e-12]
        seen.update(g)
        groups.append(g)
    reps = [g[0] for g in groups]
    s = np.asarray(s, dtype=float)
    s_red = np.stack([s[:, g].min(axis=1) for g in groups], axis=1)
    if len(groups) == 1:
        return s_red, Metric(np.zeros((1, 1))), ClassMap(groups)
    return s_red, validate_metric(D[np.ix_(reps, reps)]), ClassMap(groups)


# -- binarization -------------------------------------------------------------------


def one_hot(labels: np.ndarray, l: int) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    u = np.zeros((labels.size, l))
    u[np.arange(labels.size), labels] = 1.0
    return u


def binarize_first_max(u: np.ndarray) -> np.ndarray:
    """Index of the first maximal component per pixel."""
    return np.argmax(u, axis=1)


def binarize_psi_nearest(
    u: np.ndarray, p: SaddleProblem, iters: int = 200, block: int = 20
) -> np.ndarray:
    """Label whose unit vector is nearest to ``u(x)`` in the regularizer's own norm.

    The distance is ``Psi(e^1 (u(x) - e^l)^T)``: ``||A (u(x) - e^l)||`` for the
    Euclidean regularizer, and a gradient-projection lower bound for the
    envelope one. Ties go to the smallest label.
    """
    u = np.asarray(u, dtype=float)
    n, l = u.shape
    if not p.reg.is_envelope:
        A = p.A
        dist = np.stack([np.linalg.norm((u - np.eye(l)[i]) @ A.T, axis=1) for i in range(l)], axis=1)
        return np.argmin(dist, axis=1)
    return _psi_nearest_envelope(u, p.metric, iters, block)


def _psi_nearest_envelope(u, D, iters, block, tau=2.0):
    n, l = u.shape
    best = np.full(n, np.inf)
    label = np.zeros(n, dtype=int)
    for i in range(l):
        z = (u - np.eye(l)[i])[:, None, :]  # d = 1 suffices by rotation invariance
        v = z.copy()
        bound = np.full(n, -np.inf)
        live = np.arange(n)
        done = 0
        while done < iters and live.size:
            for _ in range(min(block, iters - done)):
                v[live] = project_envelope(v[live] + tau * z[live], D, 1e-6, 200)
                bound[live] = np.maximum(bound[live], np.sum(z[live] * v[live], axis=(1, 2)))
            done += block
            # a lower bound at or above the incumbent rules this label out
            live = live[bound[live] < best[live]]
        best[live] = bound[live]
        label[live] = i
    return label


@dataclass
class BinarizationReport:
    method: str
    energy_relaxed: float
    energy_binary: float
    dual: float
    suboptimality_bound: float
    exact: bool = True
    labels: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "energy_relaxed": self.energy_relaxed,
            "energy_binary": self.energy_binary,
            "dual": self.dual,
            "suboptimality_bound": self.suboptimality_bound,
            "exact": self.exact,
        }


def binarization_bound(
    labels: np.ndarray, u: np.ndarray, v: np.ndarray, p: SaddleProblem, method: str = ""
) -> BinarizationReport:
    """A posteriori bound ``(f(binary) - f_D(v)) / |f_D(v)|`` on the discrete suboptimality.

    With the envelope regularizer the primal energies are lower bounds only
    and the report is flagged ``exact=False``.
    """
    ub = one_hot(labels, p.l)
    e_bin = primal_objective(ub, p)
    e_rel = primal_objective(u, p)
    fd = dual_objective(v, p)
    bound = (e_bin - fd) / abs(fd) if fd != 0 else e_bin - fd
    return BinarizationReport(method, e_rel, e_bin, fd, bound, primal_is_exact(p), np.asarray(labels))


# -- benchmarks --------------------------------------------------------------------

FOUR_COLORS = np.array(
    [
        [0.9, 0.9, 0.9],  # background
        [0.85, 0.15, 0.1],
        [0.1, 0.65, 0.2],
        [0.15, 0.2, 0.85],
    ]
)
TRIPLE_COLORS = np.array([[0.9, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.9]])


@dataclass
class Benchmark:
    name: str
    image: np.ndarray
    labels: LabelSet
    truth: np.ndarray  # ground-truth labels, shape dims
    mask: np.ndarray | None = None  # True where the data term is blanked out
    inverse: bool = False

    @property
    def grid(self) -> Grid:
        return Grid(self.truth.shape)

    def data_term(self) -> np.ndarray:
        s = build_l1_data_term(self.image, self.labels)
        if self.mask is not None:
            s[self.mask.ravel()] = 0.0
        return -s if self.inverse else s


def _noisy(clean: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.clip(clean + sigma * rng.standard_normal(clean.shape), 0.0, 1.0)


def four_colors(size: int = 64, sigma: float = 1.0, seed: int = 0) -> Benchmark:
    """Three foreground objects on a uniform background.

    A rectangle with a notched corner, a disk and a smooth blob, in scale-free
    coordinates so every size shows the same structure.
    """
    if size < 8:
        raise ValueError("benchmark size must be at least 8")
    y, x = np.mgrid[0:size, 0:size] / size + 0.5 / size
    truth = np.zeros((size, size), dtype=int)
    rect = (x > 0.08) & (x < 0.48) & (y > 0.1) & (y < 0.45)
    notch = (x > 0.3) & (y > 0.3)
    truth[rect & ~notch] = 1
    truth[(x - 0.72) ** 2 + (y - 0.3) ** 2 < 0.17**2] = 2
    ang = np.arctan2(y - 0.68, x - 0.45)
    radius = 0.2 * (1.0 + 0.25 * np.cos(3 * ang) + 0.1 * np.sin(5 * ang))
    truth[np.hypot(x - 0.45, y - 0.68) < radius] = 3
    clean = FOUR_COLORS[truth]
    return Benchmark("fourcolors", _noisy(clean, sigma, seed), LabelSet(FOUR_COLORS), truth)


def triple_point(size: int = 32, inverse: bool = False, sigma: float = 0.0, seed: int = 0) -> Benchmark:
    """Three 120-degree wedges meeting at the center; data blanked in a central square."""
    if size < 8:
        raise ValueError("benchmark size must be at least 8")
    y, x = np.mgrid[0:size, 0:size] + 0.5 - size / 2
    ang = np.mod(np.arctan2(y, x) + np.pi / 2, 2 * np.pi)
    truth = np.minimum((ang / (2 * np.pi / 3)).astype(int), 2)
    half = size // 4
    c = size // 2
    mask = np.zeros((size, size), dtype=bool)
    mask[c - half : c + half, c - half : c + half] = True
    img = _noisy(TRIPLE_COLORS[truth], sigma, seed) if sigma > 0 else TRIPLE_COLORS[truth]
    name = "inverse_triple_point" if inverse else "triple_point"
    return Benchmark(name, img, LabelSet(TRIPLE_COLORS), truth, mask, inverse)


def two_class_disk(size: int = 32, sigma: float = 0.3, seed: int = 0) -> Benchmark:
    """Gray disk on a dark background, two labels."""
    if size < 8:
        raise ValueError("benchmark size must be at least 8")
    y, x = np.mgrid[0:size, 0:size] / size + 0.5 / size
    truth = (np.hypot(x - 0.5, y - 0.5) < 0.3).astype(int)
    protos = np.array([[0.2], [0.8]])
    img = _noisy(protos[truth, 0], sigma, seed)
    return Benchmark("disk", img, LabelSet(protos), truth)


def checker(size: int = 32, cells: int = 4, l: int = 2, sigma: float = 0.3, seed: int = 0) -> Benchmark:
    """Checkerboard with ``l`` gray levels cycling over the cells."""
    if size < 8:
        raise ValueError("benchmark size must be at least 8")
    y, x = np.mgrid[0:size, 0:size] * cells // size
    truth = (x + y) % l
    protos = np.linspace(0.1, 0.9, l)[:, None]
    img = _noisy(protos[truth, 0], sigma, seed)
    return Benchmark("checker", img, LabelSet(protos), truth)


BENCHMARKS = {
    "fourcolors": four_colors,
    "triple_point": triple_point,
    "inverse_triple_point": lambda size=32, **kw: triple_point(size, inverse=True, **kw),
    "disk": two_class_disk,
    "checker": checker,
}


def generate_benchmark(kind: str, size: int, seed: int = 0, **params) -> Benchmark:
    key = kind.lower().replace("-", "_")
    if key not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {kind!r}; choose from {sorted(BENCHMARKS)}")
    return BENCHMARKS[key](size=size, seed=seed, **params)
