"""Brute-force references used by several test modules."""

import numpy as np

from curvetrack.grid import LabelMap


def brute_force_sdf(inside: np.ndarray) -> np.ndarray:
    """Signed distance from every pixel centre to the nearest boundary point.

    The boundary between a pixel and a 4-neighbour of the other class is
    placed at the midpoint of the pair, which is where a +-1/2 indicator
    crosses zero.
    """
    pts = []
    hy, hx = np.nonzero(inside[:, :-1] != inside[:, 1:])
    pts.append(np.column_stack([hx + 0.5, hy]))
    vy, vx = np.nonzero(inside[:-1, :] != inside[1:, :])
    pts.append(np.column_stack([vx, vy + 0.5]))
    pts = np.concatenate(pts).astype(np.float64)
    ys, xs = np.mgrid[0:inside.shape[0], 0:inside.shape[1]]
    grid = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    d = np.empty(len(grid))
    for s in range(0, len(grid), 1024):
        diff = grid[s:s + 1024, None, :] - pts[None, :, :]
        d[s:s + 1024] = np.sqrt((diff ** 2).sum(-1).min(1))
    d = d.reshape(inside.shape)
    return np.where(inside, -d, d)


def random_blob_mask(rng, shape=(64, 64), n_disks=3) -> LabelMap:
    """Union of a few random disks kept away from the border."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    inside = np.zeros(shape, dtype=bool)
    for _ in range(n_disks):
        r = rng.uniform(5, 14)
        cx = rng.uniform(r + 2, w - r - 3)
        cy = rng.uniform(r + 2, h - r - 3)
        inside |= np.hypot(xs - cx, ys - cy) <= r
    return LabelMap(inside.astype(np.int32), 2)


def dense_polyline(points, closed, spacing=0.01):
    pts = np.asarray(points, dtype=np.float64)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(np.ceil(np.hypot(*(b - a)) / spacing)), 1)
        t = np.arange(n)[:, None] / n
        out.append(a + t * (b - a))
    out.append(pts[-1:])
    return np.concatenate(out)


def brute_hausdorff(a_pts, b_pts):
    def directed(p, q):
        best = 0.0
        for s in range(0, len(p), 512):
            d = np.sqrt(((p[s:s + 512, None, :] - q[None, :, :]) ** 2).sum(-1)).min(1)
            best = max(best, d.max())
        return best

    return max(directed(a_pts, b_pts), directed(b_pts, a_pts))
