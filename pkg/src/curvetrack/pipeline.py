"""In-memory tracking driver: optical flow plus one filter step per frame pair."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .filter import FilterConfig, ParticlePool, StepDiagnostics, init_ensemble, step
from .flow import FlowParams, horn_schunck
from .grid import ScalarField, VectorField, sample_array
from .levelset import identity_correspondence

__all__ = ["TrackedFrame", "track_sequence", "deterministic_config", "locate_markers"]


@dataclass(frozen=True, eq=False)
class TrackedFrame:
    frame: int
    phi: ScalarField
    psi: VectorField
    diagnostics: StepDiagnostics | None
    flow: VectorField | None


def deterministic_config(config: FilterConfig) -> FilterConfig:
    """Same settings with no diffusion and a single particle."""
    sde = replace(config.sde, sigma_n=0.0, sigma_t=0.0)
    return replace(config, sde=sde, n_particles=1)


def track_sequence(images, phi0: ScalarField, config: FilterConfig,
                   flow_params: FlowParams = FlowParams(), workers: int = 1, flows=None, on_frame=None):
    """Track ``phi0`` through ``images``; yields one :class:`TrackedFrame` per frame, frame 0 first.

    ``flows[t - 1]``, when given, replaces the Horn-Schunck flow from frame
    ``t - 1`` to ``t``. ``on_frame`` is called with each result as it is produced.
    """
    images = list(images)
    if len(images) < 2:
        raise ParameterError("tracking needs at least 2 frames")
    for k, im in enumerate(images):
        if im.shape != phi0.shape:
            raise ParameterError(f"frame {k} has shape {im.shape}, initial state has {phi0.shape}")
    psi0 = identity_correspondence(*phi0.shape)
    ensemble = init_ensemble(phi0, psi0, config)
    out = [TrackedFrame(0, phi0, psi0, None, None)]
    if on_frame is not None:
        on_frame(out[0])
    with ParticlePool(workers) as pool:
        for t in range(1, len(images)):
            w = flows[t - 1] if flows is not None else horn_schunck(images[t - 1], images[t], flow_params)
            res = step(ensemble, w, images[t], t, config, pool)
            ensemble = res.ensemble
            rec = TrackedFrame(t, res.phi, res.psi, res.diagnostics, w)
            out.append(rec)
            if on_frame is not None:
                on_frame(rec)
    return out


def _psi_at(psi: np.ndarray, x: float, y: float) -> np.ndarray:
    return np.array([sample_array(psi[0], x, y), sample_array(psi[1], x, y)], dtype=np.float64)


def locate_markers(psi: VectorField, markers, iterations: int = 8) -> np.ndarray:
    """Current position of each initial-frame point ``x0`` in ``markers``.

    Starts from the pixel minimizing ``|psi(x) - x0|`` and refines by Newton
    steps on the bilinear interpolant of ``psi``, confined to the pixel's
    neighbourhood. Returns an ``(m, 2)`` array of ``(x, y)``.
    """
    d = psi.data
    h, w = psi.shape
    pts = np.asarray(markers, dtype=np.float64).reshape(-1, 2)
    out = np.empty_like(pts)
    eps = 1e-3
    for k, (mx, my) in enumerate(pts):
        dist2 = (d[0] - mx) ** 2 + (d[1] - my) ** 2
        iy, ix = np.unravel_index(int(np.argmin(dist2)), dist2.shape)
        x, y = float(ix), float(iy)
        lo_x, hi_x = max(ix - 1, 0), min(ix + 1, w - 1)
        lo_y, hi_y = max(iy - 1, 0), min(iy + 1, h - 1)
        target = np.array([mx, my])
        for _ in range(iterations):
            r = _psi_at(d, x, y) - target
            if np.hypot(*r) < 1e-6:
                break
            jx = (_psi_at(d, x + eps, y) - _psi_at(d, x - eps, y)) / (2 * eps)
            jy = (_psi_at(d, x, y + eps) - _psi_at(d, x, y - eps)) / (2 * eps)
            jac = np.column_stack([jx, jy])
            if abs(np.linalg.det(jac)) < 1e-9:
                break
            dx, dy = np.linalg.solve(jac, -r)
            x = min(max(x + dx, lo_x), hi_x)
            y = min(max(y + dy, lo_y), hi_y)
        out[k] = (x, y)
    return out

