"""Signed distance fields, semi-Lagrangian transport of (phi, psi), reinitialization
and zero-contour extraction.

``phi`` is a :class:`ScalarField` holding signed distance in pixels (negative
inside the tracked structure). ``psi`` is a :class:`VectorField` whose value at
``x`` is the position, in the initial frame, of the material point now at ``x``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateInputError, ParameterError, StepError
from .grid import LabelMap, ScalarField, VectorField

__all__ = [
    "Contour",
    "sdf_from_mask",
    "identity_correspondence",
    "advect",
    "reinitialize",
    "extract_contour",
    "narrow_band",
    "write_contours_csv",
    "read_contours_csv",
    "rasterize_contours",
]

MAX_STEP_PX = 2.0


@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray  # (n, 2) of (x, y)
    closed: bool

    def __len__(self):
        return len(self.points)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every polyline segment."""
        p = self.points
        if self.closed and len(p) > 1:
            return p, np.roll(p, -1, axis=0)
        if len(p) == 1:
            return p, p
        return p[:-1], p[1:]

    def length(self) -> float:
        a, b = self.segments()
        return float(np.hypot(*(b - a).T).sum())

    def centroid(self) -> np.ndarray:
        """Length-weighted centroid of the polyline."""
        a, b = self.segments()
        seg = np.hypot(*(b - a).T)
        if seg.sum() == 0:
            return self.points.mean(axis=0)
        return ((a + b) * 0.5 * seg[:, None]).sum(axis=0) / seg.sum()


def identity_correspondence(height: int, width: int) -> VectorField:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return VectorField(np.stack([xs, ys]))


# ---------------------------------------------------------------------------
# distance construction


def _axis_crossings(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance along x and y from each pixel to the nearest linear zero crossing (inf if none)."""
    inside = phi <= 0.0
    dx = np.full(phi.shape, np.inf)
    dy = np.full(phi.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        # crossing between columns x and x+1
        cx = inside[:, :-1] != inside[:, 1:]
        t = phi[:, :-1] / (phi[:, :-1] - phi[:, 1:])
        dx[:, :-1] = np.where(cx, t, dx[:, :-1])
        dx[:, 1:] = np.where(cx, np.minimum(dx[:, 1:], 1.0 - t), dx[:, 1:])
        cy = inside[:-1, :] != inside[1:, :]
        t = phi[:-1, :] / (phi[:-1, :] - phi[1:, :])
        dy[:-1, :] = np.where(cy, t, dy[:-1, :])
        dy[1:, :] = np.where(cy, np.minimum(dy[1:, :], 1.0 - t), dy[1:, :])
    return dx, dy


def _combine_axes(dx, dy):
    both = np.isfinite(dx) & np.isfinite(dy)
    d = np.minimum(dx, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        comb = dx * dy / np.sqrt(dx * dx + dy * dy)
    return np.where(both, np.where(d > 0, comb, 0.0), d)


def _march(phi: np.ndarray, seed: np.ndarray, known: np.ndarray, limit: float, order: int) -> np.ndarray:
    if not known.any():
        raise DegenerateInputError("level set has no zero crossing")
    inside = phi <= 0.0
    dist = kernels.fast_march(np.ascontiguousarray(seed), known.astype(np.uint8), limit, order,
                              inside.astype(np.uint8))
    return np.where(inside, -dist, dist)


def sdf_from_mask(mask: LabelMap, inside_class: int, limit: float = math.inf) -> ScalarField:
    """Signed distance to the boundary of ``inside_class`` by fast marching.

    The boundary sits at the midpoints between inside and outside pixel
    centres (linear interpolation of the +/-0.5 indicator).
    """
    indicator = np.where(mask.labels == inside_class, -0.5, 0.5)
    if (indicator < 0).all() or (indicator > 0).all():
        raise DegenerateInputError(f"mask is uniform with respect to class {inside_class}")
    dx, dy = _axis_crossings(indicator)
    seed = _combine_axes(dx, dy)
    known = np.isfinite(seed)
    return ScalarField(_march(indicator, np.where(known, seed, 0.0), known, limit, 1))


def reinitialize(phi: ScalarField, limit: float = math.inf) -> ScalarField:
    """Rebuild a signed distance field with the same zero level set.

    Pixels next to the interface are seeded with ``|phi| / |grad phi|``, falling
    back to the axis-crossing estimate where that is inconsistent; the rest is
    filled by second-order fast marching.
    """
    v = phi.values
    dx, dy = _axis_crossings(v)
    near = np.isfinite(dx) | np.isfinite(dy)
    if not near.any():
        raise DegenerateInputError("level set has no sign change")
    gx = np.gradient(v, axis=1)
    gy = np.gradient(v, axis=0)
    mag = np.hypot(gx, gy)
    bound = np.minimum(dx, dy)
    with np.errstate(divide="ignore", invalid="ignore"):
        dgrad = np.abs(v) / mag
    ok = (mag > 1e-9) & (dgrad <= bound)
    seed = np.where(ok, dgrad, _combine_axes(dx, dy))
    seed = np.where(near, seed, 0.0)
    return ScalarField(_march(v, seed, near, limit, 2))


# ---------------------------------------------------------------------------
# transport


def _transport(phi: np.ndarray, psi: np.ndarray, disp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One semi-Lagrangian step of ``phi`` and both ``psi`` components along ``disp``."""
    stacked = np.empty((3,) + phi.shape)
    stacked[0] = phi
    stacked[1:] = psi
    out = kernels.advect(stacked, np.ascontiguousarray(disp[0]), np.ascontiguousarray(disp[1]))
    return out[0], out[1:]


def advect(phi: ScalarField, psi: VectorField, w: VectorField, dt: float) -> tuple[ScalarField, VectorField]:
    """Advance ``phi`` and ``psi`` by ``dt`` frames through the velocity ``w``.

    Each value is replaced by the bilinear sample at the back-traced point
    ``x - w(x) dt``; both fields share the same characteristics.
    """
    if phi.shape != psi.shape or phi.shape != w.shape:
        raise ParameterError(f"shape mismatch: phi {phi.shape}, psi {psi.shape}, w {w.shape}")
    disp = w.data * dt
    max_disp = float(np.hypot(disp[0], disp[1]).max())
    if max_disp > MAX_STEP_PX:
        raise StepError(f"advection step displaces up to {max_disp:.3f} px (limit {MAX_STEP_PX} px)")
    if max_disp == 0.0:
        return phi, psi
    p, q = _transport(phi.values, psi.data, disp)
    return ScalarField(p), VectorField(q)


def narrow_band(phi: ScalarField, radius: float) -> np.ndarray:
    if radius <= 0:
        raise ParameterError(f"band radius must be positive, got {radius}")
    return np.abs(phi.values) <= radius


# ---------------------------------------------------------------------------
# marching squares

# edges of a cell: 0 top, 1 right, 2 bottom, 3 left; corners tl, tr, br, bl
_CORNER_EDGES = ((3, 0), (0, 1), (1, 2), (2, 3))


def extract_contour(phi: ScalarField) -> list[Contour]:
    """Zero level set as polylines through linearly interpolated edge crossings.

    Inside is ``phi <= 0``. Saddle cells are resolved with the cell-centre
    average. Returns an empty list when there is no sign change.
    """
    v = phi.values
    h, w = v.shape
    inside = v <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        th = v[:, :-1] / (v[:, :-1] - v[:, 1:])  # horizontal edges (y, x)-(y, x+1)
        tv = v[:-1, :] / (v[:-1, :] - v[1:, :])  # vertical edges (y, x)-(y+1, x)
    ch = inside[:, :-1] != inside[:, 1:]
    cv = inside[:-1, :] != inside[1:, :]
    if not (ch.any() or cv.any()):
        return []

    def edge_key(y, x, e):
        # horizontal edges: 2 * (y * w + x), vertical: 2 * (y * w + x) + 1
        if e == 0:
            return 2 * (y * w + x)
        if e == 2:
            return 2 * ((y + 1) * w + x)
        if e == 3:
            return 2 * (y * w + x) + 1
        return 2 * (y * w + x + 1) + 1

    def point(key):
        k, vert = divmod(key, 2)
        y, x = divmod(k, w)
        if vert:
            return (float(x), y + float(tv[y, x]))
        return (x + float(th[y, x]), float(y))

    cell_cross = (ch[:-1, :] | ch[1:, :] | cv[:, :-1] | cv[:, 1:])
    adj: dict[int, list[int]] = {}

    def link(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    for y, x in zip(*np.nonzero(cell_cross)):
        y = int(y)
        x = int(x)
        corners = (inside[y, x], inside[y, x + 1], inside[y + 1, x + 1], inside[y + 1, x])
        crossed = [e for e, (a, b) in enumerate(((0, 1), (1, 2), (2, 3), (3, 0))) if corners[a] != corners[b]]
        if len(crossed) == 2:
            link(edge_key(y, x, crossed[0]), edge_key(y, x, crossed[1]))
        elif len(crossed) == 4:
            centre_inside = (v[y, x] + v[y, x + 1] + v[y + 1, x + 1] + v[y + 1, x]) <= 0.0
            for c in range(4):
                # cut off the corners that are not connected through the centre
                if corners[c] != centre_inside:
                    e1, e2 = _CORNER_EDGES[c]
                    link(edge_key(y, x, e1), edge_key(y, x, e2))

    contours = []
    seen = set()

    def walk(start):
        chain = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [n for n in adj[cur] if n != prev and n not in seen]
            if not nxt:
                closed = len(chain) > 2 and start in adj[cur] and prev is not None
                return chain, closed
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)

    ends = sorted(k for k, n in adj.items() if len(n) == 1)
    for k in ends:
        if k not in seen:
            chain, _ = walk(k)
            contours.append(_make_contour([point(c) for c in chain], False))
    for k in sorted(adj):
        if k not in seen:
            chain, closed = walk(k)
            contours.append(_make_contour([point(c) for c in chain], closed))
    return contours


def _make_contour(points, closed):
    p = np.asarray(points, dtype=np.float64)
    keep = np.ones(len(p), dtype=bool)
    keep[1:] = np.any(p[1:] != p[:-1], axis=1)
    p = p[keep]
    if closed and len(p) > 1 and np.all(p[0] == p[-1]):
        p = p[:-1]
    return Contour(p, closed)


# ---------------------------------------------------------------------------
# contour I/O and rendering


def write_contours_csv(contours, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "x", "y", "contour", "closed"])
        for cid, c in enumerate(contours):
            for i, (x, y) in enumerate(c.points):
                wr.writerow([i, f"{x:.6f}", f"{y:.6f}", cid, int(c.closed)])


def read_contours_csv(path) -> list[Contour]:
    groups: dict[int, list] = {}
    closed: dict[int, bool] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cid = int(row["contour"])
            groups.setdefault(cid, []).append((int(row["index"]), float(row["x"]), float(row["y"])))
            closed[cid] = bool(int(row.get("closed", 0) or 0))
    out = []
    for cid in sorted(groups):
        pts = sorted(groups[cid])
        out.append(Contour(np.array([(x, y) for _, x, y in pts]), closed[cid]))
    return out


def rasterize_contours(contours, shape) -> np.ndarray:
    """Boolean image with every pixel touched by a contour segment set (1-px stamping)."""
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    for c in contours:
        a, b = c.segments()
        for (x0, y0), (x1, y1) in zip(a, b):
            n = max(2, int(math.ceil(2 * math.hypot(x1 - x0, y1 - y0))) + 1)
            xs = np.rint(np.linspace(x0, x1, n)).astype(int)
            ys = np.rint(np.linspace(y0, y1, n)).astype(int)
            ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
            out[ys[ok], xs[ok]] = True
    return out
