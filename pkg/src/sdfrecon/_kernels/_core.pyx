# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled kernel core: BVH queries, convolution, interpolation, FPS.

Semantics match sdfrecon._kernels.numpy_impl (same epsilons, same clamp
rules); only the traversal strategy differs (per-ray stacks instead of
packet index sets).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, INFINITY, copysign

cnp.import_array()

NAME = "compiled"

cdef double EPS_BARY = 1e-9
cdef double EPS_T = 1e-9
cdef double PARITY_MARGIN = 1e-9

cdef int STACK_CAP = 128


cdef inline double _inv_component(double d) nogil:
    if d == 0.0:
        return 1e300
    if fabs(d) < 1e-300:
        return 1.0 / copysign(1e-300, d)
    return 1.0 / d


cdef inline bint _slab(const double* bmin, const double* bmax,
                       double ox, double oy, double oz,
                       double ivx, double ivy, double ivz,
                       double limit, double* tnear_out) nogil:
    cdef double t0, t1, tnear, tfar, tmp
    t0 = (bmin[0] - ox) * ivx
    t1 = (bmax[0] - ox) * ivx
    if t0 > t1:
        tmp = t0; t0 = t1; t1 = tmp
    tnear = t0
    tfar = t1
    t0 = (bmin[1] - oy) * ivy
    t1 = (bmax[1] - oy) * ivy
    if t0 > t1:
        tmp = t0; t0 = t1; t1 = tmp
    if t0 > tnear:
        tnear = t0
    if t1 < tfar:
        tfar = t1
    t0 = (bmin[2] - oz) * ivz
    t1 = (bmax[2] - oz) * ivz
    if t0 > t1:
        tmp = t0; t0 = t1; t1 = tmp
    if t0 > tnear:
        tnear = t0
    if t1 < tfar:
        tfar = t1
    if tfar < (tnear if tnear > 0.0 else 0.0) or tnear > limit:
        return 0
    tnear_out[0] = tnear
    return 1


def ray_closest(origins, dirs, v0, e1, e2, bounds, left_first, count, t_max=np.inf):
    cdef double[:, ::1] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef double[:, ::1] d = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double[:, ::1] ab = np.ascontiguousarray(e1, dtype=np.float64)
    cdef double[:, ::1] ac = np.ascontiguousarray(e2, dtype=np.float64)
    cdef double[:, ::1] bb = np.ascontiguousarray(bounds, dtype=np.float64)
    cdef cnp.int32_t[::1] lf = np.ascontiguousarray(left_first, dtype=np.int32)
    cdef cnp.int32_t[::1] ct = np.ascontiguousarray(count, dtype=np.int32)
    cdef Py_ssize_t n = o.shape[0]
    cdef double tmax = float(t_max)

    out_t = np.full(n, tmax, dtype=np.float64)
    out_p = np.full(n, -1, dtype=np.int64)
    cdef double[::1] bt = out_t
    cdef cnp.int64_t[::1] bp = out_p

    cdef int stack[128]
    cdef double tstack[128]
    cdef int sp, node, left, c, first
    cdef Py_ssize_t i, p
    cdef double ox, oy, oz, dx, dy, dz, ivx, ivy, ivz
    cdef double tn, tn_l, tn_r
    cdef bint hit_l, hit_r
    cdef double pvx, pvy, pvz, det, inv_det, tvx, tvy, tvz, u, v, qvx, qvy, qvz, t

    with nogil:
        for i in range(n):
            ox = o[i, 0]; oy = o[i, 1]; oz = o[i, 2]
            dx = d[i, 0]; dy = d[i, 1]; dz = d[i, 2]
            ivx = _inv_component(dx); ivy = _inv_component(dy); ivz = _inv_component(dz)
            sp = 0
            if _slab(&bb[0, 0], &bb[0, 3], ox, oy, oz, ivx, ivy, ivz, bt[i], &tn):
                stack[0] = 0; tstack[0] = tn; sp = 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if tstack[sp] > bt[i]:
                    continue
                c = ct[node]
                if c > 0:
                    first = lf[node]
                    for p in range(first, first + c):
                        pvx = dy * ac[p, 2] - dz * ac[p, 1]
                        pvy = dz * ac[p, 0] - dx * ac[p, 2]
                        pvz = dx * ac[p, 1] - dy * ac[p, 0]
                        det = pvx * ab[p, 0] + pvy * ab[p, 1] + pvz * ab[p, 2]
                        if fabs(det) <= 1e-300:
                            continue
                        inv_det = 1.0 / det
                        tvx = ox - a[p, 0]; tvy = oy - a[p, 1]; tvz = oz - a[p, 2]
                        u = (tvx * pvx + tvy * pvy + tvz * pvz) * inv_det
                        if u < -EPS_BARY:
                            continue
                        qvx = tvy * ab[p, 2] - tvz * ab[p, 1]
                        qvy = tvz * ab[p, 0] - tvx * ab[p, 2]
                        qvz = tvx * ab[p, 1] - tvy * ab[p, 0]
                        v = (dx * qvx + dy * qvy + dz * qvz) * inv_det
                        if v < -EPS_BARY or u + v > 1.0 + EPS_BARY:
                            continue
                        t = (qvx * ac[p, 0] + qvy * ac[p, 1] + qvz * ac[p, 2]) * inv_det
                        if t > EPS_T and t < bt[i]:
                            bt[i] = t
                            bp[i] = p
                else:
                    left = lf[node]
                    hit_l = _slab(&bb[left, 0], &bb[left, 3], ox, oy, oz,
                                  ivx, ivy, ivz, bt[i], &tn_l)
                    hit_r = _slab(&bb[left + 1, 0], &bb[left + 1, 3], ox, oy, oz,
                                  ivx, ivy, ivz, bt[i], &tn_r)
                    if hit_l and hit_r:
                        if tn_l <= tn_r:
                            stack[sp] = left + 1; tstack[sp] = tn_r; sp += 1
                            stack[sp] = left; tstack[sp] = tn_l; sp += 1
                        else:
                            stack[sp] = left; tstack[sp] = tn_l; sp += 1
                            stack[sp] = left + 1; tstack[sp] = tn_r; sp += 1
                    elif hit_l:
                        stack[sp] = left; tstack[sp] = tn_l; sp += 1
                    elif hit_r:
                        stack[sp] = left + 1; tstack[sp] = tn_r; sp += 1
    return out_t, out_p


def ray_parity(origins, dirs, v0, e1, e2, bounds, left_first, count):
    cdef double[:, ::1] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef double[:, ::1] d = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double[:, ::1] ab = np.ascontiguousarray(e1, dtype=np.float64)
    cdef double[:, ::1] ac = np.ascontiguousarray(e2, dtype=np.float64)
    cdef double[:, ::1] bb = np.ascontiguousarray(bounds, dtype=np.float64)
    cdef cnp.int32_t[::1] lf = np.ascontiguousarray(left_first, dtype=np.int32)
    cdef cnp.int32_t[::1] ct = np.ascontiguousarray(count, dtype=np.int32)
    cdef Py_ssize_t n = o.shape[0]

    out_c = np.zeros(n, dtype=np.int64)
    out_s = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] cnt = out_c
    cdef cnp.uint8_t[::1] sus = out_s

    cdef int stack[128]
    cdef int sp, node, left, c, first
    cdef Py_ssize_t i, p
    cdef double ox, oy, oz, dx, dy, dz, ivx, ivy, ivz, tn
    cdef double pvx, pvy, pvz, det, inv_det, tvx, tvy, tvz, u, v, qvx, qvy, qvz, t
    cdef double nx, ny, nz, nlen, margin

    with nogil:
        for i in range(n):
            ox = o[i, 0]; oy = o[i, 1]; oz = o[i, 2]
            dx = d[i, 0]; dy = d[i, 1]; dz = d[i, 2]
            ivx = _inv_component(dx); ivy = _inv_component(dy); ivz = _inv_component(dz)
            sp = 0
            if _slab(&bb[0, 0], &bb[0, 3], ox, oy, oz, ivx, ivy, ivz, INFINITY, &tn):
                stack[0] = 0; sp = 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                c = ct[node]
                if c > 0:
                    first = lf[node]
                    for p in range(first, first + c):
                        pvx = dy * ac[p, 2] - dz * ac[p, 1]
                        pvy = dz * ac[p, 0] - dx * ac[p, 2]
                        pvz = dx * ac[p, 1] - dy * ac[p, 0]
                        det = pvx * ab[p, 0] + pvy * ab[p, 1] + pvz * ab[p, 2]
                        nx = ab[p, 1] * ac[p, 2] - ab[p, 2] * ac[p, 1]
                        ny = ab[p, 2] * ac[p, 0] - ab[p, 0] * ac[p, 2]
                        nz = ab[p, 0] * ac[p, 1] - ab[p, 1] * ac[p, 0]
                        nlen = (nx * nx + ny * ny + nz * nz) ** 0.5
                        tvx = ox - a[p, 0]; tvy = oy - a[p, 1]; tvz = oz - a[p, 2]
                        if fabs(det) <= 1e-12 * nlen:
                            if fabs(tvx * nx + tvy * ny + tvz * nz) < 1e-9 * nlen:
                                sus[i] = 1
                            continue
                        inv_det = 1.0 / det
                        u = (tvx * pvx + tvy * pvy + tvz * pvz) * inv_det
                        qvx = tvy * ab[p, 2] - tvz * ab[p, 1]
                        qvy = tvz * ab[p, 0] - tvx * ab[p, 2]
                        qvz = tvx * ab[p, 1] - tvy * ab[p, 0]
                        v = (dx * qvx + dy * qvy + dz * qvz) * inv_det
                        t = (qvx * ac[p, 0] + qvy * ac[p, 1] + qvz * ac[p, 2]) * inv_det
                        if (u >= -EPS_BARY and v >= -EPS_BARY
                                and u + v <= 1.0 + EPS_BARY and t > EPS_T):
                            cnt[i] += 1
                            margin = u
                            if v < margin:
                                margin = v
                            if 1.0 - u - v < margin:
                                margin = 1.0 - u - v
                            if margin < PARITY_MARGIN:
                                sus[i] = 1
                else:
                    left = lf[node]
                    if _slab(&bb[left, 0], &bb[left, 3], ox, oy, oz,
                             ivx, ivy, ivz, INFINITY, &tn):
                        stack[sp] = left; sp += 1
                    if _slab(&bb[left + 1, 0], &bb[left + 1, 3], ox, oy, oz,
                             ivx, ivy, ivz, INFINITY, &tn):
                        stack[sp] = left + 1; sp += 1
    return out_c, out_s.view(bool)


cdef inline double _closest_on_tri_one(double px, double py, double pz,
                                       const double* av, const double* abv, const double* acv,
                                       double* qx, double* qy, double* qz) nogil:
    cdef double apx = px - av[0], apy = py - av[1], apz = pz - av[2]
    cdef double d1 = abv[0] * apx + abv[1] * apy + abv[2] * apz
    cdef double d2 = acv[0] * apx + acv[1] * apy + acv[2] * apz
    cdef double bx = av[0] + abv[0], by = av[1] + abv[1], bz = av[2] + abv[2]
    cdef double cx = av[0] + acv[0], cy = av[1] + acv[1], cz = av[2] + acv[2]
    cdef double bpx = px - bx, bpy = py - by, bpz = pz - bz
    cdef double d3 = abv[0] * bpx + abv[1] * bpy + abv[2] * bpz
    cdef double d4 = acv[0] * bpx + acv[1] * bpy + acv[2] * bpz
    cdef double cpx = px - cx, cpy = py - cy, cpz = pz - cz
    cdef double d5 = abv[0] * cpx + abv[1] * cpy + abv[2] * cpz
    cdef double d6 = acv[0] * cpx + acv[1] * cpy + acv[2] * cpz
    cdef double vc = d1 * d4 - d3 * d2
    cdef double vb = d5 * d2 - d1 * d6
    cdef double va = d3 * d6 - d5 * d4
    cdef double t, w, denom, dx, dy, dz

    if d1 <= 0.0 and d2 <= 0.0:
        qx[0] = av[0]; qy[0] = av[1]; qz[0] = av[2]
    elif d3 >= 0.0 and d4 <= d3:
        qx[0] = bx; qy[0] = by; qz[0] = bz
    elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        qx[0] = av[0] + t * abv[0]; qy[0] = av[1] + t * abv[1]; qz[0] = av[2] + t * abv[2]
    elif d6 >= 0.0 and d5 <= d6:
        qx[0] = cx; qy[0] = cy; qz[0] = cz
    elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        qx[0] = av[0] + t * acv[0]; qy[0] = av[1] + t * acv[1]; qz[0] = av[2] + t * acv[2]
    elif va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx[0] = bx + t * (cx - bx); qy[0] = by + t * (cy - by); qz[0] = bz + t * (cz - bz)
    else:
        denom = 1.0 / (va + vb + vc)
        t = vb * denom
        w = vc * denom
        qx[0] = av[0] + t * abv[0] + w * acv[0]
        qy[0] = av[1] + t * abv[1] + w * acv[1]
        qz[0] = av[2] + t * abv[2] + w * acv[2]
    dx = px - qx[0]; dy = py - qy[0]; dz = pz - qz[0]
    return dx * dx + dy * dy + dz * dz


cdef inline double _box_d2(const double* bmin, const double* bmax,
                           double px, double py, double pz) nogil:
    cdef double dx = 0.0, dy = 0.0, dz = 0.0
    if px < bmin[0]:
        dx = bmin[0] - px
    elif px > bmax[0]:
        dx = px - bmax[0]
    if py < bmin[1]:
        dy = bmin[1] - py
    elif py > bmax[1]:
        dy = py - bmax[1]
    if pz < bmin[2]:
        dz = bmin[2] - pz
    elif pz > bmax[2]:
        dz = pz - bmax[2]
    return dx * dx + dy * dy + dz * dz


def closest_point(points, v0, e1, e2, bounds, left_first, count):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double[:, ::1] ab = np.ascontiguousarray(e1, dtype=np.float64)
    cdef double[:, ::1] ac = np.ascontiguousarray(e2, dtype=np.float64)
    cdef double[:, ::1] bb = np.ascontiguousarray(bounds, dtype=np.float64)
    cdef cnp.int32_t[::1] lf = np.ascontiguousarray(left_first, dtype=np.int32)
    cdef cnp.int32_t[::1] ct = np.ascontiguousarray(count, dtype=np.int32)
    cdef Py_ssize_t n = pts.shape[0]

    out_d2 = np.full(n, np.inf)
    out_p = np.full(n, -1, dtype=np.int64)
    out_q = np.zeros((n, 3))
    cdef double[::1] bd = out_d2
    cdef cnp.int64_t[::1] bp = out_p
    cdef double[:, ::1] bq = out_q

    cdef int stack[128]
    cdef double dstack[128]
    cdef int sp, node, left, c, first
    cdef Py_ssize_t i, p
    cdef double px, py, pz, d2, dl, dr, qx, qy, qz

    with nogil:
        for i in range(n):
            px = pts[i, 0]; py = pts[i, 1]; pz = pts[i, 2]
            sp = 1
            stack[0] = 0
            dstack[0] = _box_d2(&bb[0, 0], &bb[0, 3], px, py, pz)
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if dstack[sp] >= bd[i]:
                    continue
                c = ct[node]
                if c > 0:
                    first = lf[node]
                    for p in range(first, first + c):
                        d2 = _closest_on_tri_one(px, py, pz, &a[p, 0], &ab[p, 0], &ac[p, 0],
                                                 &qx, &qy, &qz)
                        if d2 < bd[i]:
                            bd[i] = d2
                            bp[i] = p
                            bq[i, 0] = qx; bq[i, 1] = qy; bq[i, 2] = qz
                else:
                    left = lf[node]
                    dl = _box_d2(&bb[left, 0], &bb[left, 3], px, py, pz)
                    dr = _box_d2(&bb[left + 1, 0], &bb[left + 1, 3], px, py, pz)
                    if dl <= dr:
                        if dr < bd[i]:
                            stack[sp] = left + 1; dstack[sp] = dr; sp += 1
                        if dl < bd[i]:
                            stack[sp] = left; dstack[sp] = dl; sp += 1
                    else:
                        if dl < bd[i]:
                            stack[sp] = left; dstack[sp] = dl; sp += 1
                        if dr < bd[i]:
                            stack[sp] = left + 1; dstack[sp] = dr; sp += 1
    return out_d2, out_p, out_q


def conv3d(x, w, bias, stride, pad):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(bias, dtype=np.float64)
    cdef int s = int(stride), p = int(pad)
    cdef Py_ssize_t co = wv.shape[0], ci = wv.shape[1]
    cdef Py_ssize_t kd = wv.shape[2], kh = wv.shape[3], kw = wv.shape[4]
    cdef Py_ssize_t di = xv.shape[1], hi = xv.shape[2], wi = xv.shape[3]
    cdef Py_ssize_t do_ = (di + 2 * p - kd) // s + 1
    cdef Py_ssize_t ho = (hi + 2 * p - kh) // s + 1
    cdef Py_ssize_t wo = (wi + 2 * p - kw) // s + 1

    out = np.empty((co, do_, ho, wo))
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t oc, z, y, xx, c, kz, ky, kx
    cdef Py_ssize_t iz, iy, ix
    cdef double acc

    with nogil:
        for oc in range(co):
            for z in range(do_):
                for y in range(ho):
                    for xx in range(wo):
                        acc = bv[oc]
                        for c in range(ci):
                            for kz in range(kd):
                                iz = z * s - p + kz
                                if iz < 0 or iz >= di:
                                    continue
                                for ky in range(kh):
                                    iy = y * s - p + ky
                                    if iy < 0 or iy >= hi:
                                        continue
                                    for kx in range(kw):
                                        ix = xx * s - p + kx
                                        if ix < 0 or ix >= wi:
                                            continue
                                        acc += wv[oc, c, kz, ky, kx] * xv[c, iz, iy, ix]
                        ov[oc, z, y, xx] = acc
    return out


def trilinear(grid, pts, origin, cell):
    cdef double[:, :, :, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[:, ::1] q = np.ascontiguousarray(pts, dtype=np.float64)
    cdef double[::1] org = np.ascontiguousarray(origin, dtype=np.float64)
    cdef double[::1] cl = np.ascontiguousarray(cell, dtype=np.float64)
    cdef Py_ssize_t nx = g.shape[0], ny = g.shape[1], nz = g.shape[2], nc = g.shape[3]
    cdef Py_ssize_t n = q.shape[0]

    out = np.empty((n, nc))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, ch
    cdef double ux, uy, uz, fx, fy, fz
    cdef Py_ssize_t x0, y0, z0, x1, y1, z1
    cdef double c00, c10, c01, c11, c0, c1

    with nogil:
        for i in range(n):
            ux = (q[i, 0] - org[0]) / cl[0]
            uy = (q[i, 1] - org[1]) / cl[1]
            uz = (q[i, 2] - org[2]) / cl[2]
            if ux < 0.0:
                ux = 0.0
            if ux > nx - 1:
                ux = nx - 1
            if uy < 0.0:
                uy = 0.0
            if uy > ny - 1:
                uy = ny - 1
            if uz < 0.0:
                uz = 0.0
            if uz > nz - 1:
                uz = nz - 1
            x0 = <Py_ssize_t>floor(ux)
            y0 = <Py_ssize_t>floor(uy)
            z0 = <Py_ssize_t>floor(uz)
            if x0 > nx - 2:
                x0 = nx - 2
            if y0 > ny - 2:
                y0 = ny - 2
            if z0 > nz - 2:
                z0 = nz - 2
            if x0 < 0:
                x0 = 0
            if y0 < 0:
                y0 = 0
            if z0 < 0:
                z0 = 0
            fx = ux - x0
            fy = uy - y0
            fz = uz - z0
            x1 = x0 + 1
            y1 = y0 + 1
            z1 = z0 + 1
            if x1 > nx - 1:
                x1 = nx - 1
            if y1 > ny - 1:
                y1 = ny - 1
            if z1 > nz - 1:
                z1 = nz - 1
            for ch in range(nc):
                c00 = g[x0, y0, z0, ch] * (1 - fx) + g[x1, y0, z0, ch] * fx
                c10 = g[x0, y1, z0, ch] * (1 - fx) + g[x1, y1, z0, ch] * fx
                c01 = g[x0, y0, z1, ch] * (1 - fx) + g[x1, y0, z1, ch] * fx
                c11 = g[x0, y1, z1, ch] * (1 - fx) + g[x1, y1, z1, ch] * fx
                c0 = c00 * (1 - fy) + c10 * fy
                c1 = c01 * (1 - fy) + c11 * fy
                ov[i, ch] = c0 * (1 - fz) + c1 * fz
    return out


def fps(points, k):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t kk = int(k)

    out = np.empty(kk, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = out
    d2_arr = np.empty(n)
    cdef double[::1] d2 = d2_arr
    cdef Py_ssize_t i, j, best
    cdef double dx, dy, dz, nd, bestval

    with nogil:
        idx[0] = 0
        for j in range(n):
            dx = pts[j, 0] - pts[0, 0]
            dy = pts[j, 1] - pts[0, 1]
            dz = pts[j, 2] - pts[0, 2]
            d2[j] = dx * dx + dy * dy + dz * dz
        for i in range(1, kk):
            best = 0
            bestval = d2[0]
            for j in range(1, n):
                if d2[j] > bestval:
                    bestval = d2[j]
                    best = j
            idx[i] = best
            for j in range(n):
                dx = pts[j, 0] - pts[best, 0]
                dy = pts[j, 1] - pts[best, 1]
                dz = pts[j, 2] - pts[best, 2]
                nd = dx * dx + dy * dy + dz * dz
                if nd < d2[j]:
                    d2[j] = nd
    return out
