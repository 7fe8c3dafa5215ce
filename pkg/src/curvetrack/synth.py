"""Synthetic CT-like sequences with known ground truth.

Label maps are deformed by closed-form motions and rendered into intensities
with a per-class Gaussian model: white noise per class, smoothed inside each
class only, so class boundaries stay step edges.

Label conventions: ``0`` is background, rendered at a constant value and
excluded from model fitting; label ``i >= 1`` uses model entry ``i - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import LabelMap, ScalarField, gaussian_smooth
from .levelset import MAX_STEP_PX

__all__ = [
    "ClassModel",
    "DeformationSpec",
    "DEFAULT_MODEL",
    "image_histogram",
    "fit_gmm",
    "synthesize_ct",
    "warp_labels",
    "generate_sequence",
    "disk_mask",
    "layer_mask",
    "diapir_benchmark",
    "translate_benchmark",
]

SIGMA_FLOOR = 1e-3
N_BINS = 256


@dataclass(frozen=True, eq=False)
class ClassModel:
    """Per-class normal intensity model; arrays of equal length ``k``."""

    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.means, dtype=np.float64))
        s = np.atleast_1d(np.asarray(self.stds, dtype=np.float64))
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if not (m.ndim == s.ndim == w.ndim == 1 and len(m) == len(s) == len(w) >= 1):
            raise ParameterError("means, stds and weights must be 1D arrays of equal nonzero length")
        if (s < 0).any():
            raise ParameterError("class standard deviations must be >= 0")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError(f"mixture weights must be >= 0 and sum to 1, got sum {w.sum()!r}")
        for name, a in (("means", m), ("stds", s), ("weights", w)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def k(self) -> int:
        return len(self.means)

    @classmethod
    def uniform(cls, means, stds) -> ClassModel:
        means = np.atleast_1d(np.asarray(means, dtype=np.float64))
        stds = np.broadcast_to(np.asarray(stds, dtype=np.float64), means.shape)
        return cls(means, stds, np.full(len(means), 1.0 / len(means)))

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d) -> ClassModel:
        try:
            means = d["means"]
            stds = d["stds"]
        except (KeyError, TypeError) as e:
            raise ParameterError(f"class model needs 'means' and 'stds': {e}") from None
        if "weights" not in d:
            return cls.uniform(means, stds)
        return cls(means, stds, d["weights"])


# salt (label 1) darker than sediment (label 2)
DEFAULT_MODEL = ClassModel.uniform([0.35, 0.65], 0.06)


# ---------------------------------------------------------------------------
# mixture fitting


def image_histogram(image: ScalarField, exclude: np.ndarray | None = None) -> np.ndarray:
    """256-bin counts of intensities in ``[0, 1]``, skipping pixels where ``exclude`` is true."""
    v = image.values if exclude is None else image.values[~np.asarray(exclude, dtype=bool)]
    idx = np.clip((v * N_BINS).astype(np.intp), 0, N_BINS - 1)
    return np.bincount(idx.ravel(), minlength=N_BINS)


def _normal_pdf(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


def fit_gmm(histogram, k: int, max_iterations: int = 200, tolerance: float = 1e-6,
            sigma_floor: float = SIGMA_FLOOR) -> ClassModel:
    """EM fit of a ``k``-component 1D mixture to binned intensities.

    Each bin is treated as ``count`` samples at its centre. Components start
    at equally spaced quantiles of the data. Iteration stops when the mean
    log-likelihood per sample gains less than ``tolerance`` or after
    ``max_iterations``. Components are returned sorted by mean.
    """
    counts = np.asarray(histogram, dtype=np.float64)
    if counts.ndim != 1 or len(counts) != N_BINS:
        raise ParameterError(f"histogram must have {N_BINS} bins, got shape {counts.shape}")
    if (counts < 0).any():
        raise ParameterError("histogram counts must be >= 0")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    occupied = np.flatnonzero(counts)
    if len(occupied) == 0:
        raise ParameterError("histogram is empty")
    if k > len(occupied):
        raise ParameterError(f"k = {k} exceeds the {len(occupied)} occupied bins")

    x = (occupied + 0.5) / N_BINS
    c = counts[occupied]
    n = c.sum()
    cdf = np.cumsum(c) / n
    mu = x[np.minimum(np.searchsorted(cdf, (np.arange(k) + 0.5) / k), len(x) - 1)]
    if len(np.unique(mu)) < k:  # heavy bins swallowed several quantiles
        mu = x[np.round(np.linspace(0, len(x) - 1, k)).astype(int)]
    mean_all = float((c * x).sum() / n)
    sd = np.full(k, max(math.sqrt(float((c * (x - mean_all) ** 2).sum() / n)) / k, sigma_floor))
    pi = np.full(k, 1.0 / k)

    prev = -math.inf
    for _ in range(max_iterations):
        dens = pi[None, :] * _normal_pdf(x[:, None], mu[None, :], sd[None, :])
        total = np.maximum(dens.sum(axis=1), 1e-300)
        ll = float((c * np.log(total)).sum() / n)
        resp = dens / total[:, None] * c[:, None]
        nk = np.maximum(resp.sum(axis=0), 1e-12)
        pi = nk / n
        mu = (resp * x[:, None]).sum(axis=0) / nk
        sd = np.maximum(np.sqrt((resp * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk), sigma_floor)
        if ll - prev < tolerance:
            break
        prev = ll
    order = np.argsort(mu, kind="stable")
    pi = pi[order]
    return ClassModel(mu[order], sd[order], pi / pi.sum())


# ---------------------------------------------------------------------------
# intensity synthesis


def synthesize_ct(mask: LabelMap, model: ClassModel, gamma: float = 2.0, seed=None,
                  background: float = 0.0) -> ScalarField:
    """CT-like image of ``mask``: per-class normal noise, smoothed within each class, clamped to ``[0, 1]``.

    Smoothing is linear and reproduces class constants, so the class mean
    is added after smoothing the zero-mean noise; a zero-variance model
    gives the exact piecewise-constant image.
    """
    labels = mask.labels
    top = int(labels.max())
    if top > model.k:
        raise ParameterError(f"mask uses class {top} but the model has only {model.k} classes")
    means = np.concatenate([[background], model.means])
    stds = np.concatenate([[0.0], model.stds])
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(labels.shape) * stds[labels]
    if gamma > 0:
        noise = gaussian_smooth(ScalarField(noise), gamma, mask).values
    elif gamma < 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    return ScalarField(np.clip(means[labels] + noise, 0.0, 1.0))


# ---------------------------------------------------------------------------
# deformations


_KINDS = ("translate", "rotate", "shear", "diapir")


@dataclass(frozen=True)
class DeformationSpec:
    """A steady closed-form motion applied once per frame.

    ``magnitude`` is per frame: px for ``translate`` (along ``direction_deg``,
    0 = +x) and ``diapir`` (peak upward rise), degrees for ``rotate``
    (about ``center``), px of horizontal slip per px of height for ``shear``.
    The diapir rise at column ``x`` is ``magnitude * exp(-(x - cx)^2 / (2 width^2))``.
    ``center`` defaults to the image centre.
    """

    kind: str
    magnitude: float
    n_frames: int
    direction_deg: float = 0.0
    center: tuple | None = None
    width: float = 12.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"deformation kind must be one of {_KINDS}, got {self.kind!r}")
        if self.n_frames < 1:
            raise ParameterError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.kind in ("translate", "diapir") and abs(self.magnitude) > MAX_STEP_PX:
            raise ParameterError(f"per-frame displacement {abs(self.magnitude)} px exceeds {MAX_STEP_PX} px")
        if not self.width > 0:
            raise ParameterError(f"width must be > 0, got {self.width}")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def _center(self, shape) -> tuple[float, float]:
        if self.center is not None:
            return self.center
        h, w = shape
        return (w - 1) / 2.0, (h - 1) / 2.0

    def map_points(self, x, y, t: float, shape):
        """Image at time ``t`` of the points ``(x, y)`` under the motion (``t`` may be negative)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        m = self.magnitude
        cx, cy = self._center(shape)
        if self.kind == "translate":
            a = math.radians(self.direction_deg)
            return x + t * m * math.cos(a), y + t * m * math.sin(a)
        if self.kind == "rotate":
            a = math.radians(t * m)
            ca, sa = math.cos(a), math.sin(a)
            dx, dy = x - cx, y - cy
            return cx + ca * dx - sa * dy, cy + sa * dx + ca * dy
        if self.kind == "shear":
            return x + t * m * (y - cy), y
        rise = m * np.exp(-((x - cx) ** 2) / (2.0 * self.width ** 2))
        return x, y - t * rise

    def displacement(self, shape) -> np.ndarray:
        """Per-frame displacement ``(2, h, w)`` of every pixel."""
        ys, xs = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
        px, py = self.map_points(xs, ys, 1.0, shape)
        return np.stack([px - xs, py - ys])

    def check(self, shape) -> None:
        d = float(np.hypot(*self.displacement(shape)).max())
        if d > MAX_STEP_PX + 1e-12:
            raise ParameterError(f"per-frame displacement {d:.3f} px exceeds {MAX_STEP_PX} px on a {shape} grid")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "magnitude": self.magnitude, "n_frames": self.n_frames,
                "direction_deg": self.direction_deg, "center": self.center, "width": self.width}

    @classmethod
    def from_dict(cls, d) -> DeformationSpec:
        try:
            return cls(**d)
        except TypeError as e:
            raise ParameterError(f"bad deformation spec: {e}") from None


def warp_labels(mask: LabelMap, spec: DeformationSpec, t: int) -> LabelMap:
    """``mask`` after ``t`` frames: each pixel takes the class nearest to its back-traced origin."""
    h, w = mask.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ox, oy = spec.map_points(xs, ys, -float(t), mask.shape)
    ix = np.clip(np.floor(ox + 0.5).astype(np.intp), 0, w - 1)
    iy = np.clip(np.floor(oy + 0.5).astype(np.intp), 0, h - 1)
    return LabelMap(mask.labels[iy, ix], mask.n_classes)


def generate_sequence(initial_mask: LabelMap, spec: DeformationSpec, model: ClassModel, seed=0,
                      gamma: float = 2.0, background: float = 0.0):
    """``spec.n_frames`` images and truth masks; frame 0 is the initial mask.

    Truth masks depend only on ``(initial_mask, spec)``. Every frame gets its
    own noise stream derived from ``seed``.
    """
    spec.check(initial_mask.shape)
    truth = [initial_mask] + [warp_labels(initial_mask, spec, t) for t in range(1, spec.n_frames)]
    root = np.random.SeedSequence(seed)
    images = [
        synthesize_ct(m, model, gamma, np.random.default_rng(s), background)
        for m, s in zip(truth, root.spawn(len(truth)))
    ]
    return images, truth


# ---------------------------------------------------------------------------
# benchmark scenes


def disk_mask(shape, center, radius, inside: int = 1, outside: int = 2) -> LabelMap:
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    inner = np.hypot(xs - center[0], ys - center[1]) <= radius
    return LabelMap(np.where(inner, inside, outside), max(inside, outside) + 1)


def layer_mask(shape, depth: float, bump: float = 0.0, width: float = 12.0,
               salt: int = 1, sediment: int = 2) -> LabelMap:
    """Salt below ``y = depth`` (with an optional Gaussian bump of height ``bump``), sediment above."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    top = depth - bump * np.exp(-((xs - (w - 1) / 2.0) ** 2) / (2.0 * width ** 2))
    return LabelMap(np.where(ys >= top, salt, sediment), max(salt, sediment) + 1)


def diapir_benchmark(size: int = 128, n_frames: int = 60, rise: float = 1.25, width: float = 24.0):
    """Initial mask and deformation of the rising-salt benchmark (salt is label 1).

    The salt top starts at ``0.85 * size`` with a 4 px seed bump. At the
    default rise the flank moves fast enough for Horn-Schunck to lag on the
    step edges, so flow-only tracking drifts while the region term can pull
    it back; at half that rate the flow alone is nearly exact. The dome apex
    has radius of curvature ``width**2 / uplift``; the default keeps it near
    8 px after 60 frames, where a narrower profile grows a needle thinner
    than the likelihood band.
    """
    mask = layer_mask((size, size), depth=0.85 * size, bump=4.0, width=width)
    spec = DeformationSpec("diapir", rise, n_frames, width=width)
    return mask, spec


def translate_benchmark(size: int = 128, n_frames: int = 21, step: float = 1.0, radius: float = 20.0):
    """Off-centre disk moving along +x (the disk is label 1)."""
    mask = disk_mask((size, size), (0.35 * size, 0.5 * size), radius)
    spec = DeformationSpec("translate", step, n_frames)
    return mask, spec
