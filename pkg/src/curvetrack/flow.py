"""Horn-Schunck optical flow between two frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import ScalarField, VectorField

__all__ = ["FlowParams", "horn_schunck", "hs_derivatives", "hs_energy"]


@dataclass(frozen=True)
class FlowParams:
    """Horn-Schunck settings.

    ``alpha`` weighs the smoothness term against brightness constancy with
    intensities expressed in ``intensity_scale`` units (8-bit grey levels by
    default), so ``alpha = 7`` keeps its usual meaning for normalized images.
    ``tolerance`` is the mean per-pixel update (px/frame) that ends iteration.
    """

    alpha: float = 7.0
    max_iterations: int = 500
    tolerance: float = 1e-4
    intensity_scale: float = 255.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be > 0, got {self.alpha}")
        if self.max_iterations < 1:
            raise ParameterError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.tolerance < 0:
            raise ParameterError(f"tolerance must be >= 0, got {self.tolerance}")
        if not self.intensity_scale > 0:
            raise ParameterError(f"intensity_scale must be > 0, got {self.intensity_scale}")


def hs_derivatives(prev: np.ndarray, nxt: np.ndarray, scale: float = 1.0):
    """``(Ix, Iy, It)`` from first differences averaged over each 2x2x2 cube.

    The cube anchored at pixel ``(y, x)`` spans ``(y..y+1, x..x+1)`` in both
    frames; the last row and column repeat the border.
    """
    a = np.pad(prev, ((0, 1), (0, 1)), mode="edge") * scale
    b = np.pad(nxt, ((0, 1), (0, 1)), mode="edge") * scale

    def ddx(e):
        return e[:-1, 1:] - e[:-1, :-1] + e[1:, 1:] - e[1:, :-1]

    def ddy(e):
        return e[1:, :-1] - e[:-1, :-1] + e[1:, 1:] - e[:-1, 1:]

    def total(e):
        return e[:-1, :-1] + e[1:, :-1] + e[:-1, 1:] + e[1:, 1:]

    ix = 0.25 * (ddx(a) + ddx(b))
    iy = 0.25 * (ddy(a) + ddy(b))
    it = 0.25 * (total(b) - total(a))
    return ix, iy, it


def _neighbour_sum(u: np.ndarray) -> np.ndarray:
    s = np.zeros_like(u)
    s[1:] += u[:-1]
    s[:-1] += u[1:]
    s[:, 1:] += u[:, :-1]
    s[:, :-1] += u[:, 1:]
    return s


def _degree(shape) -> np.ndarray:
    return _neighbour_sum(np.ones(shape))


def hs_energy(u, v, ix, iy, it, alpha) -> float:
    """Discrete functional: squared brightness-constancy residual plus
    ``alpha^2`` times squared differences over every 4-neighbour edge."""
    data = ix * u + iy * v + it
    smooth = (
        np.sum(np.diff(u, axis=0) ** 2) + np.sum(np.diff(u, axis=1) ** 2)
        + np.sum(np.diff(v, axis=0) ** 2) + np.sum(np.diff(v, axis=1) ** 2)
    )
    return float(np.sum(data * data) + alpha * alpha * smooth)


def horn_schunck(prev: ScalarField, nxt: ScalarField, params: FlowParams = FlowParams(),
                 callback=None) -> VectorField:
    """Dense flow from ``prev`` to ``nxt`` by Jacobi iteration of the Euler-Lagrange equations.

    Every sweep sets each ``(u, v)`` to the exact minimizer of the energy with
    its neighbours frozen, using the mean of the existing 4-neighbours (the
    border simply has fewer). ``callback(iteration, u, v)`` is invoked after
    every sweep when given.
    """
    if prev.shape != nxt.shape:
        raise ParameterError(f"frame shapes differ: {prev.shape} vs {nxt.shape}")
    ix, iy, it = hs_derivatives(prev.values, nxt.values, params.intensity_scale)
    deg = _degree(ix.shape)
    denom = params.alpha ** 2 * deg + ix * ix + iy * iy
    u = np.zeros_like(ix)
    v = np.zeros_like(ix)
    for k in range(params.max_iterations):
        ubar = _neighbour_sum(u) / deg
        vbar = _neighbour_sum(v) / deg
        r = (ix * ubar + iy * vbar + it) / denom
        un = ubar - ix * r
        vn = vbar - iy * r
        change = float(np.hypot(un - u, vn - v).mean())
        u, v = un, vn
        if callback is not None:
            callback(k, u, v)
        if change <= params.tolerance:
            break
    return VectorField(np.stack([u, v]))
