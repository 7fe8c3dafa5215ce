"""Bootstrap particle filter over level-set states.

Each particle carries a signed distance field ``phi``, a correspondence map
``psi`` and a weight. A step propagates every particle through the stochastic
transport model, weights it by a tempered two-region band energy against the
next observation, and resamples systematically when the effective sample size
drops below ``resample_threshold * N``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateInputError, FilterDegeneracyError, ParameterError
from .grid import ScalarField, VectorField
from .levelset import reinitialize
from .sde import RESAMPLE_STREAM, NoiseStream, SdeParams, propagate

__all__ = [
    "Particle",
    "FilterConfig",
    "StepDiagnostics",
    "StepResult",
    "ParticlePool",
    "init_ensemble",
    "band_energy",
    "log_likelihood",
    "effective_sample_size",
    "systematic_resample",
    "offspring_counts",
    "estimate",
    "step",
]


@dataclass(frozen=True, eq=False)
class Particle:
    phi: ScalarField
    psi: VectorField
    weight: float

    def __post_init__(self):
        if not self.weight >= 0.0:
            raise ParameterError(f"particle weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class FilterConfig:
    """Filter settings.

    ``likelihood_temp`` divides the band energy, which is a mean squared
    residual in normalized intensity, so ``0.05 ** 2`` reads as a residual
    standard deviation of 0.05. ``band_radius`` is the half-width in px of
    the band the energy is measured on.
    """

    n_particles: int = 200
    likelihood_temp: float = 0.05 ** 2
    resample_threshold: float = 0.5
    sde: SdeParams = field(default_factory=SdeParams)
    master_seed: int = 0
    band_radius: float = 3.0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ParameterError(f"n_particles must be >= 1, got {self.n_particles}")
        if not self.likelihood_temp > 0:
            raise ParameterError(f"likelihood_temp must be > 0, got {self.likelihood_temp}")
        if not 0.0 < self.resample_threshold <= 1.0:
            raise ParameterError(f"resample_threshold must lie in (0, 1], got {self.resample_threshold}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ParameterError("master_seed must be a 64-bit unsigned integer")
        if not self.band_radius > 0:
            raise ParameterError(f"band_radius must be > 0, got {self.band_radius}")


@dataclass(frozen=True)
class StepDiagnostics:
    frame: int
    ess: float
    max_log_likelihood: float
    resampled: bool
    wall_ms: float

    FIELDS = ("frame", "ess", "max_log_likelihood", "resampled", "wall_ms")

    def row(self):
        return [self.frame, f"{self.ess:.6g}", f"{self.max_log_likelihood:.6g}",
                int(self.resampled), f"{self.wall_ms:.3f}"]


@dataclass(frozen=True, eq=False)
class StepResult:
    """Ensemble after the step, the estimate of the reweighted (pre-resampling) ensemble, diagnostics."""

    ensemble: list
    phi: ScalarField
    psi: VectorField
    diagnostics: StepDiagnostics


def init_ensemble(phi0: ScalarField, psi0: VectorField, config: FilterConfig) -> list:
    """``N`` copies of the initial state with uniform weights (the fields are immutable, so they are shared)."""
    if phi0.shape != psi0.shape:
        raise ParameterError(f"phi {phi0.shape} and psi {psi0.shape} differ in shape")
    n = config.n_particles
    return [Particle(phi0, psi0, 1.0 / n) for _ in range(n)]


# ---------------------------------------------------------------------------
# likelihood


def band_energy(phi: np.ndarray, z: np.ndarray, radius: float) -> float:
    """Two-region residual over ``|phi| <= radius``, divided by the band size.

    ``c_in`` and ``c_out`` are the Chan-Vese region means over the whole
    inside and outside, as in the drift force. Means taken over the band
    alone would score a contour lost in a uniform region as a perfect fit.
    """
    band = np.abs(phi) <= radius
    n = int(band.sum())
    if n == 0:
        raise DegenerateInputError(f"narrow band of radius {radius} is empty")
    inside = phi <= 0.0
    s_in, n_in, s_out, n_out = kernels.region_sums(phi, z)
    c_in = s_in / n_in if n_in else 0.0
    c_out = s_out / n_out if n_out else 0.0
    r = np.where(inside, z - c_in, z - c_out)[band]
    return float(np.dot(r, r)) / n


def log_likelihood(particle: Particle, z: ScalarField, temp: float, radius: float = 3.0) -> float:
    if particle.phi.shape != z.shape:
        raise ParameterError(f"shape mismatch: phi {particle.phi.shape}, image {z.shape}")
    if not temp > 0:
        raise ParameterError(f"temperature must be > 0, got {temp}")
    return -band_energy(particle.phi.values, z.values, radius) / temp


# ---------------------------------------------------------------------------
# weights and resampling


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=np.float64)
    return float(1.0 / np.sum(w * w))


def systematic_resample(weights, u: float) -> np.ndarray:
    """Ancestor indices from one offset ``u`` in ``[0, 1)``.

    The ``k``-th offspring picks the particle whose cumulative-weight
    interval contains ``(k + u) / N``.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    if n == 0:
        raise ParameterError("no weights to resample")
    if not 0.0 <= u < 1.0:
        raise ParameterError(f"offset must lie in [0, 1), got {u}")
    if not np.any(w > 0):
        raise ParameterError("all weights are zero")
    last = int(np.flatnonzero(w > 0)[-1])
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    # rounding must not open an interval for trailing zero weights; a
    # position that rounds up to 1.0 belongs to the last positive weight
    cdf[last:] = 1.0
    positions = (np.arange(n) + u) / n
    return np.minimum(np.searchsorted(cdf, positions, side="right"), last)


def offspring_counts(weights, u: float) -> np.ndarray:
    return np.bincount(systematic_resample(weights, u), minlength=len(weights))


def _resample_offset(config: FilterConfig, frame: int) -> float:
    seq = np.random.SeedSequence(config.master_seed, spawn_key=(RESAMPLE_STREAM, frame))
    return float(np.random.Generator(np.random.Philox(seq)).random())


def _normalize_log(log_w: np.ndarray, frame: int, max_ll: float) -> np.ndarray:
    finite = np.isfinite(log_w)
    if not finite.any():
        raise FilterDegeneracyError(frame, max_ll)
    w = np.where(finite, np.exp(log_w - log_w[finite].max()), 0.0)
    total = float(np.sum(w))
    if not total > 0.0:
        raise FilterDegeneracyError(frame, max_ll)
    return w / total


# ---------------------------------------------------------------------------
# estimation


def estimate(ensemble) -> tuple[ScalarField, VectorField]:
    """Weighted mean of ``phi`` (reinitialized) and the ``psi`` of the heaviest particle.

    When one particle carries all the weight its state is returned as is.
    """
    if not ensemble:
        raise ParameterError("empty ensemble")
    w = np.array([p.weight for p in ensemble])
    best = int(np.argmax(w))
    if np.count_nonzero(w) == 1:
        return ensemble[best].phi, ensemble[best].psi
    w = w / w.sum()
    mean = np.zeros(ensemble[0].phi.shape)
    for wi, p in zip(w, ensemble):
        if wi > 0.0:
            mean += wi * p.phi.values
    return reinitialize(ScalarField(mean)), ensemble[best].psi


# ---------------------------------------------------------------------------
# propagation (parallel part)


def _advance_chunk(task):
    """Propagate and score a contiguous run of particles; runs in worker processes."""
    states, start, w, z, config, frame = task
    out = []
    for k, (phi, psi) in enumerate(states):
        noise = NoiseStream(config.master_seed, start + k, frame)
        phi1, psi1 = propagate(phi, psi, w, z, config.sde, noise)
        ll = -band_energy(phi1.values, z.values, config.band_radius) / config.likelihood_temp
        out.append((phi1, psi1, ll))
    return out


class ParticlePool:
    """Fans particle propagation out to ``workers`` processes in contiguous chunks.

    Results come back in particle order, and every particle's noise is
    addressed by its index, so output does not depend on the worker count.
    ``workers = 1`` runs in the calling process.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ParameterError(f"worker count must be >= 1, got {workers}")
        self.workers = workers
        self._executor = ProcessPoolExecutor(workers) if workers > 1 else None

    def advance(self, ensemble, w, z, config, frame):
        states = [(p.phi, p.psi) for p in ensemble]
        n = len(states)
        n_chunks = min(self.workers, n)
        bounds = [round(i * n / n_chunks) for i in range(n_chunks + 1)]
        tasks = [(states[a:b], a, w, z, config, frame) for a, b in zip(bounds, bounds[1:])]
        if self._executor is None:
            chunks = map(_advance_chunk, tasks)
        else:
            chunks = self._executor.map(_advance_chunk, tasks)
        return [r for chunk in chunks for r in chunk]

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def step(ensemble, w: VectorField, z_next: ScalarField, frame: int, config: FilterConfig,
         pool: ParticlePool | None = None) -> StepResult:
    """Advance the ensemble from frame ``frame - 1`` to ``frame``.

    ``w`` is the flow from the previous observation to ``z_next``. Particles
    are propagated with streams keyed by ``(master_seed, index, frame)``,
    reweighted by their likelihood, normalized, estimated, and resampled if
    ``ESS / N < resample_threshold``.
    """
    if len(ensemble) != config.n_particles:
        raise ParameterError(f"ensemble has {len(ensemble)} particles, config expects {config.n_particles}")
    t0 = time.perf_counter()
    own_pool = pool is None
    if own_pool:
        pool = ParticlePool(1)
    try:
        moved = pool.advance(ensemble, w, z_next, config, frame)
    finally:
        if own_pool:
            pool.close()

    ll = np.array([m[2] for m in moved])
    prev = np.array([p.weight for p in ensemble])
    with np.errstate(divide="ignore"):
        log_w = np.log(prev) + ll
    max_ll = float(ll.max()) if ll.size else -math.inf
    weights = _normalize_log(log_w, frame, max_ll)
    reweighted = [Particle(phi, psi, float(wi)) for (phi, psi, _), wi in zip(moved, weights)]
    phi_est, psi_est = estimate(reweighted)

    n = config.n_particles
    ess = effective_sample_size(weights)
    resampled = ess / n < config.resample_threshold
    if resampled:
        idx = systematic_resample(weights, _resample_offset(config, frame))
        survivors = [Particle(reweighted[i].phi, reweighted[i].psi, 1.0 / n) for i in idx]
    else:
        survivors = reweighted
    diag = StepDiagnostics(frame, ess, max_ll, bool(resampled), (time.perf_counter() - t0) * 1e3)
    return StepResult(survivors, phi_est, psi_est, diag)
