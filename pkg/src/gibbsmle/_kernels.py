"""Compiled inner loops shared by the geometry, model and sampler layers.

Everything here works on plain arrays. Points are always stored as (N, 2)
float64 arrays; one-dimensional patterns carry a zero second coordinate.

Cell grids use a dense layout: ``cell_pts[c, :cell_cnt[c]]`` lists the point
indices in cell ``c = cx + ncx * cy``. Cell sides are never smaller than the
search radius, so a one-ring stencil finds every neighbour.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

KIND_PIECEWISE = 0
KIND_LJ = 1
KIND_AREA = 2

# indices into the scalar parameter vector handed to the kernels
P_Z, P_DELTA, P_RMAX, P_A, P_B, P_N, P_M, P_TRUNC, P_AREA_R, P_AREA_BETA = range(10)
N_PAR = 10

LJ_MIN_DIST = 1e-8

STATUS_DONE = 0
STATUS_GROW_POINTS = 1
STATUS_GROW_CELLS = 2


# ---------------------------------------------------------------------------
# pair potentials


@njit(cache=True)
def phi_piecewise(d, brk, vals):
    q = brk.shape[0]
    for k in range(q):
        if d < brk[k]:
            return vals[k]
        if d == brk[k]:
            nxt = vals[k + 1] if k + 1 < q else 0.0
            return min(vals[k], nxt)
    return 0.0


@njit(cache=True)
def phi_lj(d, par):
    if d < LJ_MIN_DIST:
        return np.inf
    if d > par[P_TRUNC]:
        return 0.0
    return par[P_A] * d ** (-par[P_N]) - par[P_B] * d ** (-par[P_M])


# ---------------------------------------------------------------------------
# union of equal discs, optionally clipped to a rectangle


@njit(cache=True)
def _norm_angle(a):
    a = a - TWO_PI * math.floor(a / TWO_PI)
    if a >= TWO_PI:
        a = 0.0
    return a


@njit(cache=True)
def union_area(xs, ys, m, R, clip, x0, x1, y0, y1):
    """Area of the union of radius-R discs centred at the first m points.

    Green's theorem over the boundary: uncovered circle arcs plus, when
    clipping, the covered stretches of the rectangle edges.
    """
    if m == 0 or R <= 0.0:
        return 0.0
    R2 = R * R
    total = 0.0
    cand = np.empty(m, dtype=np.int64)
    dup = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        for j in range(i):
            if xs[j] == xs[i] and ys[j] == ys[i]:
                dup[i] = True
                break
    for i in range(m):
        if dup[i]:
            continue
        cx = xs[i]
        cy = ys[i]
        nc = 0
        for j in range(m):
            if j == i or dup[j]:
                continue
            dx = xs[j] - cx
            dy = ys[j] - cy
            d2 = dx * dx + dy * dy
            if d2 == 0.0 or d2 >= 4.0 * R2:
                continue
            cand[nc] = j
            nc += 1
        if clip and (cx + R <= x0 or cx - R >= x1 or cy + R <= y0 or cy - R >= y1):
            continue
        angles = np.empty(2 * nc + 10)
        k = 0
        angles[k] = 0.0
        k += 1
        angles[k] = TWO_PI
        k += 1
        for t in range(nc):
            j = cand[t]
            dx = xs[j] - cx
            dy = ys[j] - cy
            d = math.sqrt(dx * dx + dy * dy)
            base = math.atan2(dy, dx)
            half = math.acos(min(1.0, d / (2.0 * R)))
            angles[k] = _norm_angle(base - half)
            k += 1
            angles[k] = _norm_angle(base + half)
            k += 1
        if clip:
            for xl in (x0, x1):
                c = (xl - cx) / R
                if -1.0 < c < 1.0:
                    a = math.acos(c)
                    angles[k] = a
                    k += 1
                    angles[k] = TWO_PI - a
                    k += 1
            for yl in (y0, y1):
                s = (yl - cy) / R
                if -1.0 < s < 1.0:
                    a = math.asin(s)
                    angles[k] = _norm_angle(a)
                    k += 1
                    angles[k] = _norm_angle(math.pi - a)
                    k += 1
        srt = np.sort(angles[:k])
        for t in range(k - 1):
            a = srt[t]
            b = srt[t + 1]
            if b <= a:
                continue
            mid = 0.5 * (a + b)
            px = cx + R * math.cos(mid)
            py = cy + R * math.sin(mid)
            if clip and (px < x0 or px > x1 or py < y0 or py > y1):
                continue
            covered = False
            for u in range(nc):
                j = cand[u]
                ex = px - xs[j]
                ey = py - ys[j]
                if ex * ex + ey * ey < R2:
                    covered = True
                    break
            if covered:
                continue
            total += R2 * (b - a) + R * cx * (math.sin(b) - math.sin(a)) - R * cy * (
                math.cos(b) - math.cos(a)
            )
    if clip:
        total += _covered_edges(xs, ys, m, dup, R, x0, x1, y0, y1)
    return 0.5 * total


@njit(cache=True)
def _merged_cross(starts, ends, k, fixed, horizontal, forward):
    """Sum of x*dy - y*dx over merged covered intervals of one edge."""
    if k == 0:
        return 0.0
    order = np.argsort(starts[:k])
    acc = 0.0
    cur_a = starts[order[0]]
    cur_b = ends[order[0]]
    for t in range(1, k + 1):
        if t < k:
            a = starts[order[t]]
            b = ends[order[t]]
            if a <= cur_b:
                if b > cur_b:
                    cur_b = b
                continue
        # flush [cur_a, cur_b]
        if horizontal:
            if forward:
                px, py, qx, qy = cur_a, fixed, cur_b, fixed
            else:
                px, py, qx, qy = cur_b, fixed, cur_a, fixed
        else:
            if forward:
                px, py, qx, qy = fixed, cur_a, fixed, cur_b
            else:
                px, py, qx, qy = fixed, cur_b, fixed, cur_a
        acc += px * qy - py * qx
        if t < k:
            cur_a = starts[order[t]]
            cur_b = ends[order[t]]
    return acc


@njit(cache=True)
def _covered_edges(xs, ys, m, dup, R, x0, x1, y0, y1):
    starts = np.empty(m)
    ends = np.empty(m)
    acc = 0.0
    # bottom (+x at y0), top (-x at y1)
    for e in range(2):
        yl = y0 if e == 0 else y1
        k = 0
        for i in range(m):
            if dup[i]:
                continue
            dy = yl - ys[i]
            if abs(dy) < R:
                h = math.sqrt(R * R - dy * dy)
                a = max(xs[i] - h, x0)
                b = min(xs[i] + h, x1)
                if b > a:
                    starts[k] = a
                    ends[k] = b
                    k += 1
        acc += _merged_cross(starts, ends, k, yl, True, e == 0)
    # right (+y at x1), left (-y at x0)
    for e in range(2):
        xl = x1 if e == 0 else x0
        k = 0
        for i in range(m):
            if dup[i]:
                continue
            dx = xl - xs[i]
            if abs(dx) < R:
                h = math.sqrt(R * R - dx * dx)
                a = max(ys[i] - h, y0)
                b = min(ys[i] + h, y1)
                if b > a:
                    starts[k] = a
                    ends[k] = b
                    k += 1
        acc += _merged_cross(starts, ends, k, xl, False, e == 0)
    return acc


@njit(cache=True)
def union_area_all(pts, R):
    return union_area(pts[:, 0], pts[:, 1], pts.shape[0], R, False, 0.0, 0.0, 0.0, 0.0)


@njit(cache=True)
def union_area_clipped(pts, R, x0, x1, y0, y1):
    return union_area(pts[:, 0], pts[:, 1], pts.shape[0], R, True, x0, x1, y0, y1)


# ---------------------------------------------------------------------------
# dense cell grids


@njit(cache=True)
def cell_of_xy(x, y, lo, ncx, ncy, csx, csy):
    cx = int(math.floor((x - lo[0]) / csx))
    cy = int(math.floor((y - lo[1]) / csy))
    if cx < 0:
        cx = 0
    elif cx >= ncx:
        cx = ncx - 1
    if cy < 0:
        cy = 0
    elif cy >= ncy:
        cy = ncy - 1
    return cx + ncx * cy


@njit(cache=True)
def fill_grid(pts, n, lo, ncx, ncy, csx, csy, cell_pts, cell_cnt, cell_of, slot):
    """Insert the first n points; returns False when a cell overflows."""
    for i in range(n):
        c = cell_of_xy(pts[i, 0], pts[i, 1], lo, ncx, ncy, csx, csy)
        if cell_cnt[c] >= cell_pts.shape[1]:
            return False
        cell_of[i] = c
        slot[i] = cell_cnt[c]
        cell_pts[c, cell_cnt[c]] = i
        cell_cnt[c] += 1
    return True


@njit(cache=True)
def _stencil(c0, nc, periodic):
    """Neighbouring cell coordinates along one axis (deduplicated)."""
    out = np.empty(3, dtype=np.int64)
    k = 0
    if nc <= 3:
        if periodic:
            for c in range(nc):
                out[k] = c
                k += 1
            return out[:k]
    for d in range(-1, 2):
        c = c0 + d
        if periodic:
            c = c % nc
        elif c < 0 or c >= nc:
            continue
        out[k] = c
        k += 1
    return out[:k]


@njit(cache=True)
def _min_image(d, L):
    return d - L * math.floor(d / L + 0.5)


@njit(cache=True)
def local_energy_grid(
    x, y, skip, pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy,
    periodic, Lx, Ly, kind, par, brk, vals, bx, by,
):
    """Energy cost of inserting (x, y) into the gridded pattern minus ``skip``."""
    rmax = par[P_RMAX]
    delta = par[P_DELTA]
    e = par[P_Z]
    if rmax <= 0.0:
        return e
    r2 = rmax * rmax
    cx0 = int(math.floor((x - lo[0]) / csx))
    cy0 = int(math.floor((y - lo[1]) / csy))
    cx0 = min(max(cx0, 0), ncx - 1)
    cy0 = min(max(cy0, 0), ncy - 1)
    sx = _stencil(cx0, ncx, periodic)
    sy = _stencil(cy0, ncy, periodic)
    nb = 0
    for a in range(sy.shape[0]):
        for b in range(sx.shape[0]):
            c = sx[b] + ncx * sy[a]
            for t in range(cell_cnt[c]):
                j = cell_pts[c, t]
                if j == skip:
                    continue
                dx = pts[j, 0] - x
                dy = pts[j, 1] - y
                if periodic:
                    dx = _min_image(dx, Lx)
                    if Ly > 0.0:
                        dy = _min_image(dy, Ly)
                d2 = dx * dx + dy * dy
                if d2 > r2:
                    continue
                d = math.sqrt(d2)
                if d < delta:
                    return np.inf
                if kind == KIND_PIECEWISE:
                    e += phi_piecewise(d, brk, vals)
                elif kind == KIND_LJ:
                    e += phi_lj(d, par)
                else:
                    if d < 2.0 * par[P_AREA_R]:
                        bx[nb] = pts[j, 0]
                        by[nb] = pts[j, 1]
                        nb += 1
    if kind == KIND_AREA:
        R = par[P_AREA_R]
        if R > 0.0 and par[P_AREA_BETA] != 0.0:
            without = union_area(bx, by, nb, R, False, 0.0, 0.0, 0.0, 0.0)
            bx[nb] = x
            by[nb] = y
            with_x = union_area(bx, by, nb + 1, R, False, 0.0, 0.0, 0.0, 0.0)
            e += par[P_AREA_BETA] * (with_x - without)
    return e


@njit(cache=True)
def local_energies(
    U, skips, pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, kind, par, brk, vals
):
    n = pts.shape[0]
    bx = np.empty(n + 1)
    by = np.empty(n + 1)
    out = np.empty(U.shape[0])
    for k in range(U.shape[0]):
        out[k] = local_energy_grid(
            U[k, 0], U[k, 1], skips[k], pts, cell_pts, cell_cnt, lo, ncx, ncy,
            csx, csy, False, 0.0, 0.0, kind, par, brk, vals, bx, by,
        )
    return out


@njit(cache=True)
def _count_pairs(pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r, fill, pi, pj, pd):
    n = pts.shape[0]
    r2 = r * r
    k = 0
    for i in range(n):
        x = pts[i, 0]
        y = pts[i, 1]
        cx0 = min(max(int(math.floor((x - lo[0]) / csx)), 0), ncx - 1)
        cy0 = min(max(int(math.floor((y - lo[1]) / csy)), 0), ncy - 1)
        sx = _stencil(cx0, ncx, False)
        sy = _stencil(cy0, ncy, False)
        for a in range(sy.shape[0]):
            for b in range(sx.shape[0]):
                c = sx[b] + ncx * sy[a]
                for t in range(cell_cnt[c]):
                    j = cell_pts[c, t]
                    if j <= i:
                        continue
                    dx = pts[j, 0] - x
                    dy = pts[j, 1] - y
                    d2 = dx * dx + dy * dy
                    if d2 <= r2:
                        if fill:
                            pi[k] = i
                            pj[k] = j
                            pd[k] = math.sqrt(d2)
                        k += 1
    return k


@njit(cache=True)
def pairs_within(pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r):
    """All pairs i < j with distance <= r, sorted by (i, j)."""
    dummy_i = np.empty(0, dtype=np.int64)
    dummy_d = np.empty(0)
    k = _count_pairs(pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r, False,
                     dummy_i, dummy_i, dummy_d)
    pi = np.empty(k, dtype=np.int64)
    pj = np.empty(k, dtype=np.int64)
    pd = np.empty(k)
    _count_pairs(pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r, True, pi, pj, pd)
    order = np.argsort(pi * (pts.shape[0] + 1) + pj)
    return pi[order], pj[order], pd[order]


@njit(cache=True)
def _count_cross(Q, pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r, fill, qi, pj, pd):
    r2 = r * r
    k = 0
    for i in range(Q.shape[0]):
        x = Q[i, 0]
        y = Q[i, 1]
        cx0 = min(max(int(math.floor((x - lo[0]) / csx)), 0), ncx - 1)
        cy0 = min(max(int(math.floor((y - lo[1]) / csy)), 0), ncy - 1)
        sx = _stencil(cx0, ncx, False)
        sy = _stencil(cy0, ncy, False)
        for a in range(sy.shape[0]):
            for b in range(sx.shape[0]):
                c = sx[b] + ncx * sy[a]
                for t in range(cell_cnt[c]):
                    j = cell_pts[c, t]
                    dx = pts[j, 0] - x
                    dy = pts[j, 1] - y
                    d2 = dx * dx + dy * dy
                    if d2 <= r2:
                        if fill:
                            qi[k] = i
                            pj[k] = j
                            pd[k] = math.sqrt(d2)
                        k += 1
    return k


@njit(cache=True)
def cross_within(Q, pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r):
    """Pairs (query i, point j) with distance <= r, sorted by (i, j)."""
    dummy_i = np.empty(0, dtype=np.int64)
    dummy_d = np.empty(0)
    k = _count_cross(Q, pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r, False,
                     dummy_i, dummy_i, dummy_d)
    qi = np.empty(k, dtype=np.int64)
    pj = np.empty(k, dtype=np.int64)
    pd = np.empty(k)
    _count_cross(Q, pts, cell_pts, cell_cnt, lo, ncx, ncy, csx, csy, r, True, qi, pj, pd)
    order = np.argsort(qi * (pts.shape[0] + 1) + pj)
    return qi[order], pj[order], pd[order]


@njit(cache=True)
def min_pair_distance(pts):
    """Closest pair (i, j) by an x-sorted sweep; (-1, -1) below two points."""
    n = pts.shape[0]
    if n < 2:
        return -1, -1
    order = np.argsort(pts[:, 0])
    best2 = np.inf
    bi, bj = order[0], order[1]
    for a in range(n):
        i = order[a]
        for b in range(a + 1, n):
            j = order[b]
            dx = pts[j, 0] - pts[i, 0]
            if dx * dx > best2:
                break
            dy = pts[j, 1] - pts[i, 1]
            d2 = dx * dx + dy * dy
            if d2 < best2:
                best2 = d2
                bi, bj = i, j
    return bi, bj


# ---------------------------------------------------------------------------
# birth-death-move Metropolis-Hastings


@njit(cache=True)
def _insert(i, c, cell_pts, cell_cnt, cell_of, slot):
    cell_of[i] = c
    slot[i] = cell_cnt[c]
    cell_pts[c, cell_cnt[c]] = i
    cell_cnt[c] += 1


@njit(cache=True)
def _unlink(i, cell_pts, cell_cnt, cell_of, slot):
    c = cell_of[i]
    s = slot[i]
    last = cell_pts[c, cell_cnt[c] - 1]
    cell_pts[c, s] = last
    slot[last] = s
    cell_cnt[c] -= 1


@njit(cache=True)
def mh_run(
    pts, n, cell_pts, cell_cnt, cell_of, slot, lo, hi, ncx, ncy, csx, csy, dim,
    periodic, kind, par, brk, vals, log_ratios, p_birth, p_death, move_r, uni,
    start, energy, acc, prop,
):
    """Run proposals ``uni[start:]`` (five uniforms each) in place.

    Returns (next step, point count, energy, status). A nonzero status means
    an array must grow before resuming from the returned step.
    """
    Lx = hi[0] - lo[0]
    Ly = hi[1] - lo[1] if dim == 2 else 0.0
    log_vol = math.log(Lx * Ly) if dim == 2 else math.log(Lx)
    cap = pts.shape[0]
    ccap = cell_pts.shape[1]
    bx = np.empty(cap + 1)
    by = np.empty(cap + 1)
    for s in range(start, uni.shape[0]):
        u0 = uni[s, 0]
        u1 = uni[s, 1]
        u2 = uni[s, 2]
        u3 = uni[s, 3]
        u4 = uni[s, 4]
        if u0 < p_birth:
            if n >= cap:
                return s, n, energy, STATUS_GROW_POINTS
            x = lo[0] + u1 * Lx
            y = lo[1] + u2 * Ly if dim == 2 else 0.0
            c = cell_of_xy(x, y, lo, ncx, ncy, csx, csy)
            if cell_cnt[c] >= ccap:
                return s, n, energy, STATUS_GROW_CELLS
            prop[0] += 1
            h = local_energy_grid(x, y, -1, pts, cell_pts, cell_cnt, lo, ncx, ncy,
                                  csx, csy, periodic, Lx, Ly, kind, par, brk, vals, bx, by)
            if h == np.inf:
                continue
            la = log_ratios[0] + log_vol - h - math.log(n + 1.0)
            if u3 == 0.0 or math.log(u3) < la:
                pts[n, 0] = x
                pts[n, 1] = y
                _insert(n, c, cell_pts, cell_cnt, cell_of, slot)
                n += 1
                energy += h
                acc[0] += 1
        elif u0 < p_birth + p_death:
            prop[1] += 1
            if n == 0:
                continue
            i = min(int(u1 * n), n - 1)
            h = local_energy_grid(pts[i, 0], pts[i, 1], i, pts, cell_pts, cell_cnt, lo,
                                  ncx, ncy, csx, csy, periodic, Lx, Ly, kind, par, brk,
                                  vals, bx, by)
            la = log_ratios[1] + math.log(n) + h - log_vol
            if u3 == 0.0 or math.log(u3) < la:
                _unlink(i, cell_pts, cell_cnt, cell_of, slot)
                last = n - 1
                if i != last:
                    pts[i, 0] = pts[last, 0]
                    pts[i, 1] = pts[last, 1]
                    c2 = cell_of[last]
                    cell_of[i] = c2
                    slot[i] = slot[last]
                    cell_pts[c2, slot[i]] = i
                n -= 1
                energy -= h
                acc[1] += 1
        else:
            prop[2] += 1
            if n == 0:
                continue
            i = min(int(u1 * n), n - 1)
            ox = pts[i, 0]
            oy = pts[i, 1]
            if dim == 2:
                rr = move_r * math.sqrt(u2)
                ang = TWO_PI * u4
                nx = ox + rr * math.cos(ang)
                ny = oy + rr * math.sin(ang)
            else:
                nx = ox + move_r * (2.0 * u2 - 1.0)
                ny = 0.0
            if periodic:
                nx = lo[0] + (nx - lo[0]) % Lx
                if dim == 2:
                    ny = lo[1] + (ny - lo[1]) % Ly
            elif nx < lo[0] or nx > hi[0] or (dim == 2 and (ny < lo[1] or ny > hi[1])):
                continue
            c_new = cell_of_xy(nx, ny, lo, ncx, ncy, csx, csy)
            if c_new != cell_of[i] and cell_cnt[c_new] >= ccap:
                prop[2] -= 1
                return s, n, energy, STATUS_GROW_CELLS
            h_old = local_energy_grid(ox, oy, i, pts, cell_pts, cell_cnt, lo, ncx, ncy,
                                      csx, csy, periodic, Lx, Ly, kind, par, brk, vals,
                                      bx, by)
            h_new = local_energy_grid(nx, ny, i, pts, cell_pts, cell_cnt, lo, ncx, ncy,
                                      csx, csy, periodic, Lx, Ly, kind, par, brk, vals,
                                      bx, by)
            if h_new == np.inf:
                continue
            la = h_old - h_new
            if u3 == 0.0 or math.log(u3) < la:
                if c_new != cell_of[i]:
                    _unlink(i, cell_pts, cell_cnt, cell_of, slot)
                    _insert(i, c_new, cell_pts, cell_cnt, cell_of, slot)
                pts[i, 0] = nx
                pts[i, 1] = ny
                energy += h_new - h_old
                acc[2] += 1
    return uni.shape[0], n, energy, STATUS_DONE
