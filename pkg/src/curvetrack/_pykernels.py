"""Pure-Python/numpy versions of the hot kernels.

Used when the compiled extension is unavailable (or ``CURVETRACK_PURE=1``).
Results agree with the compiled kernels to floating-point rounding.
"""

import heapq
import math

import numpy as np

BACKEND = "python"


def _axis_term(T, known, side, y, x, dy, dx, order, best):
    h, w = T.shape
    y1, x1 = y + dy, x + dx
    if not (0 <= y1 < h and 0 <= x1 < w) or not known[y1, x1]:
        return best
    t1 = T[y1, x1]
    y2, x2 = y1 + dy, x1 + dx
    if (order == 2 and 0 <= y2 < h and 0 <= x2 < w and known[y2, x2] and T[y2, x2] <= t1
            and (side is None or side[y2, x2] == side[y1, x1] == side[y, x])):
        c = (4.0 * t1 - T[y2, x2]) / 3.0
        return (2.25, c) if c < best[1] else best
    return (1.0, t1) if t1 < best[1] else best


def _eikonal_update(T, known, side, y, x, order=1):
    start = (0.0, math.inf)
    ax, cx = _axis_term(T, known, side, y, x, 0, 1, order, _axis_term(T, known, side, y, x, 0, -1, order, start))
    ay, cy = _axis_term(T, known, side, y, x, 1, 0, order, _axis_term(T, known, side, y, x, -1, 0, order, start))
    if cx > cy:
        ax, cx, ay, cy = ay, cy, ax, cx
    t = cx + 1.0 / math.sqrt(ax)
    if cy == math.inf or t <= cy:
        return t
    qa = ax + ay
    qb = -2.0 * (ax * cx + ay * cy)
    qc = ax * cx * cx + ay * cy * cy - 1.0
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return t
    d = (-qb + math.sqrt(disc)) / (2.0 * qa)
    return t if d < cy else d


def fast_march(seed_dist, known, limit=math.inf, order=1, side=None):
    h, w = seed_dist.shape
    T = np.where(known, seed_dist, np.inf).astype(np.float64)
    done = known.astype(bool).copy()
    heap = []

    def relax(y, x):
        for ny, nx in ((y, x - 1), (y, x + 1), (y - 1, x), (y + 1, x)):
            if 0 <= ny < h and 0 <= nx < w and not done[ny, nx]:
                t = _eikonal_update(T, done, side, ny, nx, order)
                if t < T[ny, nx]:
                    T[ny, nx] = t
                    heapq.heappush(heap, (t, ny * w + nx))

    for k in np.flatnonzero(done):
        relax(*divmod(int(k), w))
    while heap:
        t, k = heapq.heappop(heap)
        y, x = divmod(k, w)
        if done[y, x] or t > T[y, x]:
            continue
        if t > limit:
            break
        done[y, x] = True
        relax(y, x)
    T[~done | (T > limit)] = limit
    return T


def advect(fields, dx, dy):
    _, h, w = fields.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    px = np.clip(xs - dx, 0.0, w - 1)
    py = np.clip(ys - dy, 0.0, h - 1)
    x0 = np.minimum(np.floor(px).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(py).astype(np.intp), h - 2)
    fx = px - x0
    fy = py - y0
    f00 = fields[:, y0, x0]
    f01 = fields[:, y0, x0 + 1]
    f10 = fields[:, y0 + 1, x0]
    f11 = fields[:, y0 + 1, x0 + 1]
    return (1.0 - fy) * ((1.0 - fx) * f00 + fx * f01) + fy * ((1.0 - fx) * f10 + fx * f11)


def transport_step(state, flow, image, force_a, force_b, beta, noise_n, noise_t, dt, tangential=1.0):
    phi = state[0]
    gx = np.gradient(phi, axis=1)
    gy = np.gradient(phi, axis=0)
    mag = np.hypot(gx, gy)
    ok = mag >= 1e-6
    safe = np.where(ok, mag, 1.0)
    nx = np.where(ok, gx / safe, 0.0)
    ny = np.where(ok, gy / safe, 0.0)
    speed = (beta * (nx * flow[0] + ny * flow[1])
             + (1.0 - beta) * (force_a * image + force_b) + noise_n)
    slide = tangential * (ny * flow[0] - nx * flow[1]) + noise_t
    dx = np.where(ok, dt * (speed * nx + slide * ny), 0.0)
    dy = np.where(ok, dt * (speed * ny - slide * nx), 0.0)
    return advect(state, dx, dy)


def region_sums(phi, image):
    inside = phi <= 0.0
    n_in = int(inside.sum())
    return float(image[inside].sum()), n_in, float(image[~inside].sum()), inside.size - n_in
