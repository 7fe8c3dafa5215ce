# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_pykernels`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"


cdef struct HeapItem:
    double key
    Py_ssize_t idx


cdef inline void _heap_push(HeapItem* heap, Py_ssize_t* size, double key, Py_ssize_t idx) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent].key < key or (heap[parent].key == key and heap[parent].idx < idx):
            break
        heap[i] = heap[parent]
        i = parent
    heap[i].key = key
    heap[i].idx = idx


cdef inline HeapItem _heap_pop(HeapItem* heap, Py_ssize_t* size) noexcept nogil:
    cdef HeapItem top = heap[0]
    cdef HeapItem last
    cdef Py_ssize_t i = 0, child, n
    size[0] -= 1
    n = size[0]
    if n == 0:
        return top
    last = heap[n]
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and (heap[child + 1].key < heap[child].key or
                              (heap[child + 1].key == heap[child].key and heap[child + 1].idx < heap[child].idx)):
            child += 1
        if heap[child].key > last.key or (heap[child].key == last.key and heap[child].idx > last.idx):
            break
        heap[i] = heap[child]
        i = child
    heap[i] = last
    return top


cdef inline void _axis_term(double* T, unsigned char* state, const unsigned char* side, Py_ssize_t k,
                            Py_ssize_t step, bint has1, bint has2, int order, double* a, double* c) noexcept nogil:
    # upwind coefficient ``a`` and centre ``c`` of the term a (T - c)^2 along one direction
    cdef double t1, t2
    if not has1 or state[k + step] != 2:
        return
    t1 = T[k + step]
    if (order == 2 and has2 and state[k + 2 * step] == 2 and T[k + 2 * step] <= t1
            and (side == NULL or (side[k + 2 * step] == side[k] and side[k + step] == side[k]))):
        t2 = T[k + 2 * step]
        if c[0] == INFINITY or (4.0 * t1 - t2) / 3.0 < c[0]:
            a[0] = 2.25
            c[0] = (4.0 * t1 - t2) / 3.0
        return
    if t1 < c[0]:
        a[0] = 1.0
        c[0] = t1


cdef inline double _eikonal_update(double* T, unsigned char* state, const unsigned char* side, Py_ssize_t h,
                                   Py_ssize_t w, Py_ssize_t y, Py_ssize_t x, int order) noexcept nogil:
    cdef double ax = 0.0, cx = INFINITY, ay = 0.0, cy = INFINITY, t, d, qa, qb, qc, disc
    cdef Py_ssize_t k = y * w + x
    _axis_term(T, state, side, k, -1, x > 0, x > 1, order, &ax, &cx)
    _axis_term(T, state, side, k, 1, x < w - 1, x < w - 2, order, &ax, &cx)
    _axis_term(T, state, side, k, -w, y > 0, y > 1, order, &ay, &cy)
    _axis_term(T, state, side, k, w, y < h - 1, y < h - 2, order, &ay, &cy)
    if cx > cy:
        t = cx; cx = cy; cy = t
        t = ax; ax = ay; ay = t
    # single-direction solution: ax (T - cx)^2 = 1
    t = cx + 1.0 / sqrt(ax)
    if cy == INFINITY or t <= cy:
        return t
    qa = ax + ay
    qb = -2.0 * (ax * cx + ay * cy)
    qc = ax * cx * cx + ay * cy * cy - 1.0
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return t
    d = (-qb + sqrt(disc)) / (2.0 * qa)
    if d < cy:
        return t
    return d


def fast_march(const double[:, ::1] seed_dist, const unsigned char[:, ::1] known, double limit=INFINITY, int order=1,
               const unsigned char[:, ::1] side=None):
    """Unsigned fast marching (upwind ``order`` 1 or 2) outward from the ``known`` pixels.

    Pixels whose arrival time exceeds ``limit`` are left at ``limit``. When
    ``side`` is given, second-order stencils only combine pixels of equal side.
    """
    cdef Py_ssize_t h = seed_dist.shape[0], w = seed_dist.shape[1]
    cdef Py_ssize_t n = h * w, k, y, x, nb, size = 0, i
    cdef Py_ssize_t[4] nbs
    cdef double t
    cdef HeapItem item
    cdef const unsigned char* side_p = NULL
    if side is not None:
        side_p = &side[0, 0]
    out = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out_v = out
    cdef double* T = &out_v[0, 0]
    cdef unsigned char* state = <unsigned char*> malloc(n * sizeof(unsigned char))
    cdef HeapItem* heap = <HeapItem*> malloc(5 * n * sizeof(HeapItem))
    if state == NULL or heap == NULL:
        free(state)
        free(heap)
        raise MemoryError()
    with nogil:
        for y in range(h):
            for x in range(w):
                k = y * w + x
                if known[y, x]:
                    T[k] = seed_dist[y, x]
                    state[k] = 2
                else:
                    T[k] = INFINITY
                    state[k] = 0
        for k in range(n):
            if state[k] != 2:
                continue
            y = k // w
            x = k - y * w
            nbs[0] = k - 1 if x > 0 else -1
            nbs[1] = k + 1 if x < w - 1 else -1
            nbs[2] = k - w if y > 0 else -1
            nbs[3] = k + w if y < h - 1 else -1
            for i in range(4):
                nb = nbs[i]
                if nb < 0 or state[nb] == 2:
                    continue
                t = _eikonal_update(T, state, side_p, h, w, nb // w, nb - (nb // w) * w, order)
                if t < T[nb]:
                    T[nb] = t
                    state[nb] = 1
                    _heap_push(heap, &size, t, nb)
        while size > 0:
            item = _heap_pop(heap, &size)
            k = item.idx
            if state[k] == 2 or item.key > T[k]:
                continue
            if item.key > limit:
                break
            state[k] = 2
            y = k // w
            x = k - y * w
            nbs[0] = k - 1 if x > 0 else -1
            nbs[1] = k + 1 if x < w - 1 else -1
            nbs[2] = k - w if y > 0 else -1
            nbs[3] = k + w if y < h - 1 else -1
            for i in range(4):
                nb = nbs[i]
                if nb < 0 or state[nb] == 2:
                    continue
                t = _eikonal_update(T, state, side_p, h, w, nb // w, nb - (nb // w) * w, order)
                if t < T[nb]:
                    T[nb] = t
                    state[nb] = 1
                    _heap_push(heap, &size, t, nb)
        for k in range(n):
            if state[k] != 2 or T[k] > limit:
                T[k] = limit
    free(state)
    free(heap)
    return out


def advect(const double[:, :, ::1] fields, const double[:, ::1] dx, const double[:, ::1] dy):
    """Semi-Lagrangian step: ``out[c, y, x] = fields[c]`` sampled at ``(x - dx, y - dy)``.

    Sample points are clamped to the grid; interpolation is bilinear.
    """
    cdef Py_ssize_t nc = fields.shape[0], h = fields.shape[1], w = fields.shape[2]
    cdef Py_ssize_t c, y, x, x0, y0, x1, y1
    cdef double px, py, fx, fy, xmax = w - 1, ymax = h - 1
    out = np.empty((nc, h, w), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for y in range(h):
            for x in range(w):
                px = x - dx[y, x]
                py = y - dy[y, x]
                if px < 0.0:
                    px = 0.0
                elif px > xmax:
                    px = xmax
                if py < 0.0:
                    py = 0.0
                elif py > ymax:
                    py = ymax
                # px, py >= 0 after clamping, so truncation is floor
                x0 = <Py_ssize_t> px
                y0 = <Py_ssize_t> py
                if x0 > w - 2:
                    x0 = w - 2
                if y0 > h - 2:
                    y0 = h - 2
                fx = px - x0
                fy = py - y0
                x1 = x0 + 1
                y1 = y0 + 1
                for c in range(nc):
                    o[c, y, x] = ((1.0 - fy) * ((1.0 - fx) * fields[c, y0, x0] + fx * fields[c, y0, x1])
                                  + fy * ((1.0 - fx) * fields[c, y1, x0] + fx * fields[c, y1, x1]))
    return out


def transport_step(const double[:, :, ::1] state, const double[:, :, ::1] flow, const double[:, ::1] image,
                   double force_a, double force_b, double beta,
                   const double[:, ::1] noise_n, const double[:, ::1] noise_t, double dt,
                   double tangential=1.0):
    """One Euler-Maruyama substep of the stacked ``(phi, psi_x, psi_y)`` state.

    Velocity per pixel, with ``n`` from central differences of ``phi`` and
    tangent ``t = (n_y, -n_x)``:

        v = (beta n.w + (1 - beta) (force_a I + force_b) + noise_n) n + (tangential t.w + noise_t) t

    Pixels where ``|grad phi| < 1e-6`` do not move. Every channel is then
    resampled bilinearly at ``x - v dt`` (clamped to the grid).
    """
    cdef Py_ssize_t nc = state.shape[0], h = state.shape[1], w = state.shape[2]
    cdef Py_ssize_t c, y, x, x0, y0
    cdef double gx, gy, mag, nx, ny, speed, slide, px, py, fx, fy
    out = np.empty((nc, h, w), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for y in range(h):
            for x in range(w):
                if x == 0:
                    gx = state[0, y, 1] - state[0, y, 0]
                elif x == w - 1:
                    gx = state[0, y, w - 1] - state[0, y, w - 2]
                else:
                    gx = 0.5 * (state[0, y, x + 1] - state[0, y, x - 1])
                if y == 0:
                    gy = state[0, 1, x] - state[0, 0, x]
                elif y == h - 1:
                    gy = state[0, h - 1, x] - state[0, h - 2, x]
                else:
                    gy = 0.5 * (state[0, y + 1, x] - state[0, y - 1, x])
                mag = sqrt(gx * gx + gy * gy)
                if mag < 1e-6:
                    for c in range(nc):
                        o[c, y, x] = state[c, y, x]
                    continue
                nx = gx / mag
                ny = gy / mag
                speed = (beta * (nx * flow[0, y, x] + ny * flow[1, y, x])
                         + (1.0 - beta) * (force_a * image[y, x] + force_b) + noise_n[y, x])
                slide = tangential * (ny * flow[0, y, x] - nx * flow[1, y, x]) + noise_t[y, x]
                px = x - dt * (speed * nx + slide * ny)
                py = y - dt * (speed * ny - slide * nx)
                if px < 0.0:
                    px = 0.0
                elif px > w - 1:
                    px = w - 1
                if py < 0.0:
                    py = 0.0
                elif py > h - 1:
                    py = h - 1
                x0 = <Py_ssize_t> px
                y0 = <Py_ssize_t> py
                if x0 > w - 2:
                    x0 = w - 2
                if y0 > h - 2:
                    y0 = h - 2
                fx = px - x0
                fy = py - y0
                for c in range(nc):
                    o[c, y, x] = ((1.0 - fy) * ((1.0 - fx) * state[c, y0, x0] + fx * state[c, y0, x0 + 1])
                                  + fy * ((1.0 - fx) * state[c, y0 + 1, x0] + fx * state[c, y0 + 1, x0 + 1]))
    return out


def region_sums(const double[:, ::1] phi, const double[:, ::1] image):
    """Return ``(sum_in, n_in, sum_out, n_out)`` over ``phi <= 0`` / ``phi > 0``."""
    cdef Py_ssize_t h = phi.shape[0], w = phi.shape[1], y, x
    cdef double s_in = 0.0, s_out = 0.0
    cdef Py_ssize_t n_in = 0, n_out = 0
    with nogil:
        for y in range(h):
            for x in range(w):
                if phi[y, x] <= 0.0:
                    s_in += image[y, x]
                    n_in += 1
                else:
                    s_out += image[y, x]
                    n_out += 1
    return s_in, n_in, s_out, n_out
