"""Pure-numpy kernel implementations.

Fallback backend used when the compiled extension is unavailable (or forced
via SDFRECON_BACKEND=python). Ray and closest-point queries use packet-style
BVH traversal: an explicit stack of (node, active-index-array) pairs so the
per-node math is vectorized over all rays/points that reach the node.

All functions take the flat BVH arrays produced by sdfrecon.bvh.build_bvh:
    v0, e1, e2   (n_prims, 3) triangle origin and edge vectors, BVH prim order
    bounds       (n_nodes, 6) box min xyz | max xyz
    left_first   (n_nodes,)   internal: left child index; leaf: first prim
    count        (n_nodes,)   0 for internal nodes, prim count for leaves
"""

import numpy as np

NAME = "python"

_EPS_BARY = 1e-9
_EPS_T = 1e-9
_PARITY_MARGIN = 1e-9


def _safe_inv(d):
    # avoid 0-division in slab tests; sign-preserving tiny keeps misses correct
    dd = np.where(np.abs(d) < 1e-300, np.copysign(1e-300, np.where(d == 0, 1.0, d)), d)
    return 1.0 / dd


def _slab(node_bounds, o, inv):
    t0 = (node_bounds[:3] - o) * inv
    t1 = (node_bounds[3:] - o) * inv
    tnear = np.minimum(t0, t1).max(axis=1)
    tfar = np.maximum(t0, t1).min(axis=1)
    return tnear, tfar


def _moller_trumbore(o, d, a, eab, eac):
    """Intersect many rays with one triangle. Returns (t, u, v, det)."""
    pv = np.cross(d, eac)
    det = pv @ eab
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = 1.0 / det
        tv = o - a
        u = (tv * pv).sum(axis=1) * inv_det
        qv = np.cross(tv, eab)
        v = (d * qv).sum(axis=1) * inv_det
        t = (qv @ eac) * inv_det
    return t, u, v, det


def ray_closest(origins, dirs, v0, e1, e2, bounds, left_first, count, t_max=np.inf):
    """Closest-hit ray cast. Returns (t, prim) with prim == -1 for misses.

    prim indexes the BVH prim order; callers map through Bvh.prim_face.
    """
    n = origins.shape[0]
    best_t = np.full(n, t_max, dtype=np.float64)
    best_p = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return best_t, best_p
    inv = _safe_inv(dirs)
    stack = [(0, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        tnear, tfar = _slab(bounds[node], origins[idx], inv[idx])
        live = (tfar >= np.maximum(tnear, 0.0)) & (tnear <= best_t[idx])
        idx = idx[live]
        if idx.size == 0:
            continue
        c = count[node]
        if c > 0:
            first = left_first[node]
            o = origins[idx]
            d = dirs[idx]
            for p in range(first, first + c):
                t, u, v, det = _moller_trumbore(o, d, v0[p], e1[p], e2[p])
                hit = (
                    (np.abs(det) > 1e-300)
                    & (u >= -_EPS_BARY)
                    & (v >= -_EPS_BARY)
                    & (u + v <= 1.0 + _EPS_BARY)
                    & (t > _EPS_T)
                    & (t < best_t[idx])
                )
                upd = idx[hit]
                best_t[upd] = t[hit]
                best_p[upd] = p
        else:
            left = left_first[node]
            stack.append((left + 1, idx))
            stack.append((left, idx))
    return best_t, best_p


def ray_parity(origins, dirs, v0, e1, e2, bounds, left_first, count):
    """Count ray crossings for inside/outside parity.

    Returns (crossings, suspect); suspect marks rays that grazed a triangle
    edge/vertex or hit near-parallel, i.e. the parity cannot be trusted.
    """
    n = origins.shape[0]
    crossings = np.zeros(n, dtype=np.int64)
    suspect = np.zeros(n, dtype=bool)
    if n == 0:
        return crossings, suspect
    inv = _safe_inv(dirs)
    stack = [(0, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        tnear, tfar = _slab(bounds[node], origins[idx], inv[idx])
        live = tfar >= np.maximum(tnear, 0.0)
        idx = idx[live]
        if idx.size == 0:
            continue
        c = count[node]
        if c > 0:
            first = left_first[node]
            o = origins[idx]
            d = dirs[idx]
            for p in range(first, first + c):
                t, u, v, det = _moller_trumbore(o, d, v0[p], e1[p], e2[p])
                nrm = np.cross(e1[p], e2[p])
                near_plane = np.abs(det) <= 1e-12 * np.linalg.norm(nrm)
                inside = (
                    ~near_plane
                    & (u >= -_EPS_BARY)
                    & (v >= -_EPS_BARY)
                    & (u + v <= 1.0 + _EPS_BARY)
                    & (t > _EPS_T)
                )
                crossings[idx[inside]] += 1
                margin = np.minimum(np.minimum(u, v), 1.0 - u - v)
                grazing = inside & (margin < _PARITY_MARGIN)
                # a near-parallel ray only matters when it lies in the plane
                in_plane = near_plane & (
                    np.abs((o - v0[p]) @ nrm) < 1e-9 * np.linalg.norm(nrm)
                )
                suspect[idx[grazing | in_plane]] = True
        else:
            left = left_first[node]
            stack.append((left + 1, idx))
            stack.append((left, idx))
    return crossings, suspect


def _closest_on_tri(p, a, eab, eac):
    """Closest point on one triangle for many query points (Ericson's
    region walk, vectorized with a first-match mask cascade)."""
    m = p.shape[0]
    ap = p - a
    d1 = ap @ eab
    d2 = ap @ eac
    b = a + eab
    bp = p - b
    d3 = bp @ eab
    d4 = bp @ eac
    c = a + eac
    cp = p - c
    d5 = cp @ eab
    d6 = cp @ eac
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty_like(p)
    remaining = np.ones(m, dtype=bool)

    def assign(mask, value):
        nonlocal remaining
        take = remaining & mask
        out[take] = value[take] if value.ndim == 2 else value
        remaining &= ~take

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, p.shape))
        assign((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, p.shape))
        t_ab = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * eab)
        assign((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, p.shape))
        t_ac = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * eac)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + t_bc[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        vv = vb * denom
        ww = vc * denom
        interior = a + vv[:, None] * eab + ww[:, None] * eac
    out[remaining] = interior[remaining]
    return out


def closest_point(points, v0, e1, e2, bounds, left_first, count):
    """Nearest surface point per query. Returns (d2, prim, closest)."""
    n = points.shape[0]
    best_d2 = np.full(n, np.inf)
    best_p = np.full(n, -1, dtype=np.int64)
    best_q = np.zeros((n, 3))
    if n == 0:
        return best_d2, best_p, best_q
    stack = [(0, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        lo = bounds[node, :3]
        hi = bounds[node, 3:]
        clamped = np.clip(points[idx], lo, hi)
        diff = points[idx] - clamped
        box_d2 = (
            diff[:, 0] * diff[:, 0]
            + diff[:, 1] * diff[:, 1]
            + diff[:, 2] * diff[:, 2]
        )
        live = box_d2 < best_d2[idx]
        idx = idx[live]
        if idx.size == 0:
            continue
        c = count[node]
        if c > 0:
            first = left_first[node]
            pts = points[idx]
            for p in range(first, first + c):
                q = _closest_on_tri(pts, v0[p], e1[p], e2[p])
                diff = pts - q
                d2 = (
                    diff[:, 0] * diff[:, 0]
                    + diff[:, 1] * diff[:, 1]
                    + diff[:, 2] * diff[:, 2]
                )
                upd = d2 < best_d2[idx]
                tgt = idx[upd]
                best_d2[tgt] = d2[upd]
                best_p[tgt] = p
                best_q[tgt] = q[upd]
        else:
            left = left_first[node]
            stack.append((left + 1, idx))
            stack.append((left, idx))
    return best_d2, best_p, best_q


def conv3d(x, w, bias, stride, pad):
    """Direct 3D cross-correlation, zero padding. x (C,D,H,W), w (O,C,k,k,k)."""
    co, ci, kd, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad)))
    dd = (xp.shape[1] - kd) // stride + 1
    hh = (xp.shape[2] - kh) // stride + 1
    ww_ = (xp.shape[3] - kw) // stride + 1
    out = np.zeros((co, dd, hh, ww_))
    for dz in range(kd):
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[
                    :,
                    dz : dz + stride * dd : stride,
                    dy : dy + stride * hh : stride,
                    dx : dx + stride * ww_ : stride,
                ]
                out += np.einsum("oc,cdhw->odhw", w[:, :, dz, dy, dx], patch, optimize=True)
    return out + bias[:, None, None, None]


def trilinear(grid, pts, origin, cell):
    """Sample (nx,ny,nz,C) grid data at world points; border clamp.

    Corners sit at cell centers: origin is the center of cell (0,0,0).
    """
    nx, ny, nz, nc = grid.shape
    u = (pts - origin[None, :]) / cell[None, :]
    res = np.array([nx, ny, nz], dtype=np.float64)
    u = np.clip(u, 0.0, res - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), np.maximum(res.astype(np.int64) - 2, 0))
    f = u - i0
    i1 = np.minimum(i0 + 1, res.astype(np.int64) - 1)
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    fx, fy, fz = f[:, 0:1], f[:, 1:2], f[:, 2:3]
    c000 = grid[x0, y0, z0]
    c100 = grid[x1, y0, z0]
    c010 = grid[x0, y1, z0]
    c110 = grid[x1, y1, z0]
    c001 = grid[x0, y0, z1]
    c101 = grid[x1, y0, z1]
    c011 = grid[x0, y1, z1]
    c111 = grid[x1, y1, z1]
    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def fps(points, k):
    """Greedy farthest point sampling from index 0; returns selection order."""
    n = points.shape[0]
    idx = np.empty(k, dtype=np.int64)
    idx[0] = 0
    diff = points - points[0]
    d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    for i in range(1, k):
        j = int(np.argmax(d2))
        idx[i] = j
        diff = points - points[j]
        nd = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
        np.minimum(d2, nd, out=d2)
    return idx
