"""Stochastic propagation of one particle's ``(phi, psi)`` between two frames.

The interface moves with the optical flow projected on its normal, blended
with a Chan-Vese region force, plus Brownian perturbations along the normal
and tangent. All of it is applied as a transport velocity so ``phi`` and
``psi`` follow the same characteristics.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateInputError, ParameterError, StepError
from .grid import ScalarField, VectorField
from .levelset import MAX_STEP_PX, reinitialize

__all__ = [
    "SdeParams",
    "NoiseStream",
    "chan_vese_force",
    "drift_speed",
    "correlated_noise",
    "propagate",
]


@dataclass(frozen=True)
class SdeParams:
    """Diffusion constants in px per sqrt(frame); ``beta`` blends flow and region force.

    With ``tangential_flow`` the flow component along the interface is also
    applied. It leaves the interface shape unchanged but carries ``psi`` with
    the material; without it only the normal projection moves anything.
    """

    sigma_n: float = 2.0
    sigma_t: float = 2.0
    substeps: int = 20
    beta: float = 0.9
    noise_corr_len: float = 8.0
    tangential_flow: bool = True

    def __post_init__(self):
        if self.sigma_n < 0 or self.sigma_t < 0:
            raise ParameterError("diffusion constants must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"beta must lie in [0, 1], got {self.beta}")
        if self.substeps < 1:
            raise ParameterError(f"substeps must be >= 1, got {self.substeps}")
        if not self.noise_corr_len > 0:
            raise ParameterError(f"noise_corr_len must be > 0, got {self.noise_corr_len}")

    @property
    def deterministic(self) -> bool:
        return self.sigma_n == 0 and self.sigma_t == 0


# spawn-key tags keep particle streams and resampling draws disjoint
PARTICLE_STREAM = 0
RESAMPLE_STREAM = 1


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based random stream addressed by ``(seed, particle, frame)``.

    Equal coordinates give identical draws on any worker; different
    coordinates give independent Philox streams.
    """

    master_seed: int
    particle_index: int
    frame_index: int

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(PARTICLE_STREAM, self.particle_index, self.frame_index)
        )
        return np.random.Generator(np.random.Philox(seq))


# ---------------------------------------------------------------------------
# forces


def _region_means(phi: np.ndarray, image: np.ndarray) -> tuple[float, float]:
    s_in, n_in, s_out, n_out = kernels.region_sums(phi, image)
    if n_in == 0 or n_out == 0:
        raise DegenerateInputError("Chan-Vese force needs non-empty inside and outside regions")
    return s_in / n_in, s_out / n_out


def _force_coefficients(phi, image, imin, imax) -> tuple[float, float]:
    """``F = a * I + b`` with ``max |F| = 1`` over the image range (zero if no contrast)."""
    c_in, c_out = _region_means(phi, image)
    # (I - c_out)^2 - (I - c_in)^2 = (c_in - c_out) (2 I - c_in - c_out)
    d = c_in - c_out
    s = c_in + c_out
    peak = abs(d) * max(abs(2.0 * imax - s), abs(2.0 * imin - s))
    if peak == 0.0:
        return 0.0, 0.0
    return 2.0 * d / peak, -d * s / peak


def chan_vese_force(phi: ScalarField, image: ScalarField) -> ScalarField:
    """Two-region force ``(I - c_out)^2 - (I - c_in)^2`` scaled to ``max |F| = 1``.

    Positive where a pixel looks like the inside, i.e. where the interface
    should move outward.
    """
    if phi.shape != image.shape:
        raise ParameterError(f"shape mismatch: phi {phi.shape}, image {image.shape}")
    img = image.values
    a, b = _force_coefficients(phi.values, img, img.min(), img.max())
    return ScalarField(a * img + b)


def _unit_normal(phi: np.ndarray):
    gx = np.gradient(phi, axis=1)
    gy = np.gradient(phi, axis=0)
    mag = np.hypot(gx, gy)
    ok = mag >= 1e-6
    safe = np.where(ok, mag, 1.0)
    return np.where(ok, gx / safe, 0.0), np.where(ok, gy / safe, 0.0), ok


def drift_speed(phi: ScalarField, w: VectorField, force: ScalarField, beta: float) -> ScalarField:
    """Normal speed ``beta * n.w + (1 - beta) * F``; where ``grad phi`` vanishes only the force term remains."""
    if not (phi.shape == w.shape == force.shape):
        raise ParameterError("phi, w and force must share dimensions")
    nx, ny, _ = _unit_normal(phi.values)
    return ScalarField(beta * (nx * w.u + ny * w.v) + (1.0 - beta) * force.values)


# ---------------------------------------------------------------------------
# noise


@functools.lru_cache(maxsize=16)
def _noise_basis(height: int, width: int, corr_len: float):
    """Fourier synthesis basis for Gaussian-smoothed white noise on a periodic grid.

    Smoothing white noise with a Gaussian of std ``corr_len`` multiplies its
    spectrum by ``exp(-2 pi^2 corr_len^2 |f|^2)``; frequencies where that
    gain drops below 1e-4 are discarded.
    """
    cut = math.sqrt(math.log(1e4) / (2.0 * math.pi ** 2)) / corr_len

    def axis(n):
        kmax = min(int(cut * n), (n - 1) // 2)
        k = np.arange(-kmax, kmax + 1)
        pos = np.arange(n)
        return k / n, np.exp(2j * np.pi * np.outer(pos, k) / n)

    fy, ey = axis(height)
    fx, ex = axis(width)
    gain = np.exp(-2.0 * math.pi ** 2 * corr_len ** 2 * (fy[:, None] ** 2 + fx[None, :] ** 2))
    amp = gain / math.sqrt(np.sum(gain ** 2))
    return ey, amp, np.ascontiguousarray(ex.T)


def correlated_noise(rng: np.random.Generator, shape, corr_len: float) -> tuple[np.ndarray, np.ndarray]:
    """Two independent stationary Gaussian fields with unit pointwise variance.

    The real and imaginary parts of one complex synthesis are uncorrelated
    at every lag because the spectrum is symmetric.
    """
    ey, amp, ext = _noise_basis(shape[0], shape[1], float(corr_len))
    z = rng.standard_normal((2,) + amp.shape)
    coeff = amp * (z[0] + 1j * z[1])
    field = ey @ coeff @ ext
    return np.ascontiguousarray(field.real), np.ascontiguousarray(field.imag)


# ---------------------------------------------------------------------------
# propagation


def check_step(params: SdeParams, w: VectorField) -> None:
    dt = 1.0 / params.substeps
    bound = (float(w.magnitude().max()) + 3.0 * max(params.sigma_n, params.sigma_t)) * dt
    if bound > MAX_STEP_PX:
        raise StepError(
            f"substep displacement bound {bound:.3f} px exceeds {MAX_STEP_PX} px; increase substeps"
        )


def propagate(phi: ScalarField, psi: VectorField, w: VectorField, image_next: ScalarField,
              params: SdeParams, noise: NoiseStream) -> tuple[ScalarField, VectorField]:
    """Euler-Maruyama transport of ``(phi, psi)`` over one frame interval.

    Each of the ``substeps`` steps moves every pixel by ``v dt`` with

        v = (omega_n + sigma_n xi_n / sqrt(dt)) n + (t.w + sigma_t xi_t / sqrt(dt)) t

    where ``omega_n`` is the blended normal speed, ``t`` the unit tangent
    ``(n_y, -n_x)`` and ``xi`` fresh unit-variance correlated fields. The
    tangential flow term ``t.w`` (dropped when ``params.tangential_flow`` is
    off) only slides points along the interface, which keeps ``psi``
    materially transported. ``phi`` is reinitialized once at the end.
    """
    if not (phi.shape == psi.shape == w.shape == image_next.shape):
        raise ParameterError("phi, psi, w and image must share dimensions")
    check_step(params, w)
    dt = 1.0 / params.substeps
    rng = noise.generator()
    img = np.ascontiguousarray(image_next.values)
    imin, imax = float(img.min()), float(img.max())
    flow = np.ascontiguousarray(w.data)
    shape = phi.shape
    state = np.empty((3,) + shape)
    state[0] = phi.values
    state[1:] = psi.data
    noise_n = noise_t = np.zeros(shape)
    kn = params.sigma_n / math.sqrt(dt)
    kt = params.sigma_t / math.sqrt(dt)
    for _ in range(params.substeps):
        a, b = _force_coefficients(state[0], img, imin, imax)
        if not params.deterministic:
            xi_n, xi_t = correlated_noise(rng, shape, params.noise_corr_len)
            noise_n = kn * xi_n
            noise_t = kt * xi_t
        state = kernels.transport_step(state, flow, img, a, b, params.beta, noise_n, noise_t, dt,
                                       1.0 if params.tangential_flow else 0.0)
    return reinitialize(ScalarField(state[0])), VectorField(state[1:])
