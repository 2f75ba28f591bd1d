"""Numba-compiled inner loops for the contact simulator and collision checks.

These mirror the reference formulas in geometry.py / sim.py exactly; they
exist because the settle iteration and RRT edge validation dominate runtime
and are called hundreds of thousands of times per episode.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _seg_seg_dist(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    """Closest distance between two segments (Ericson's clamped solve)."""
    d1x, d1y = p2x - p1x, p2y - p1y
    d2x, d2y = q2x - q1x, q2y - q1y
    rx, ry = p1x - q1x, p1y - q1y
    a = d1x * d1x + d1y * d1y
    e = d2x * d2x + d2y * d2y
    f = d2x * rx + d2y * ry
    c = d1x * rx + d1y * ry
    b = d1x * d2x + d1y * d2y
    denom = a * e - b * b
    if denom > 1e-14:
        s = (b * f - c * e) / denom
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    else:
        s = 0.0
    if e > 1e-14:
        t = (b * s + f) / e
    else:
        t = 0.0
    if t < 0.0:
        t = 0.0
        if a > 1e-14:
            s = -c / a
            if s < 0.0:
                s = 0.0
            elif s > 1.0:
                s = 1.0
    elif t > 1.0:
        t = 1.0
        if a > 1e-14:
            s = (b - c) / a
            if s < 0.0:
                s = 0.0
            elif s > 1.0:
                s = 1.0
    if a <= 1e-14:
        s = 0.0
    cx = p1x + s * d1x - (q1x + t * d2x)
    cy = p1y + s * d1y - (q1y + t * d2y)
    return s, t, np.sqrt(cx * cx + cy * cy)


@njit(cache=True)
def _link_vs_polygon(ax, ay, bx, by, verts, normals, offsets,
                     out):
    """Signed distance of segment [a, b] to a convex polygon.

    out[0] = phi_axis, out[1:3] = outward normal, out[3:5] = witness on the
    polygon boundary. Mirrors geometry.segment_polygon_signed.
    """
    n_edges = verts.shape[0]
    t_lo, t_hi = 0.0, 1.0
    feasible = True
    for i in range(n_edges):
        ma = normals[i, 0] * ax + normals[i, 1] * ay - offsets[i]
        mb = normals[i, 0] * bx + normals[i, 1] * by - offsets[i]
        d = mb - ma
        if abs(d) < 1e-15:
            if ma > 0.0:
                feasible = False
                break
        elif d > 0.0:
            t = -ma / d
            if t < t_hi:
                t_hi = t
        else:
            t = -ma / d
            if t > t_lo:
                t_lo = t
    if feasible and t_lo <= t_hi:
        # penetrating: minimize the convex max-of-margins over [t_lo, t_hi]
        best_phi = 1e300
        best_t = t_lo
        best_edge = 0
        # candidate t values: interval ends plus pairwise crossings
        for cand_idx in range(2 + n_edges * n_edges):
            if cand_idx == 0:
                t = t_lo
            elif cand_idx == 1:
                t = t_hi
            else:
                i = (cand_idx - 2) // n_edges
                j = (cand_idx - 2) % n_edges
                if j <= i:
                    continue
                mai = normals[i, 0] * ax + normals[i, 1] * ay - offsets[i]
                mbi = normals[i, 0] * bx + normals[i, 1] * by - offsets[i]
                maj = normals[j, 0] * ax + normals[j, 1] * ay - offsets[j]
                mbj = normals[j, 0] * bx + normals[j, 1] * by - offsets[j]
                di = (mai - maj) - (mbi - mbj)
                if abs(di) <= 1e-15:
                    continue
                t = (mai - maj) / di
                if t <= t_lo or t >= t_hi:
                    continue
            px = ax + t * (bx - ax)
            py = ay + t * (by - ay)
            mmax = -1e300
            kmax = 0
            for k in range(n_edges):
                m = normals[k, 0] * px + normals[k, 1] * py - offsets[k]
                if m > mmax:
                    mmax = m
                    kmax = k
            if mmax < best_phi:
                best_phi = mmax
                best_t = t
                best_edge = kmax
        px = ax + best_t * (bx - ax)
        py = ay + best_t * (by - ay)
        nx_, ny_ = normals[best_edge, 0], normals[best_edge, 1]
        wx = px - best_phi * nx_
        wy = py - best_phi * ny_
        # clamp the witness onto the edge segment
        e0x, e0y = verts[best_edge, 0], verts[best_edge, 1]
        k2 = (best_edge + 1) % n_edges
        e1x, e1y = verts[k2, 0], verts[k2, 1]
        dx, dy = e1x - e0x, e1y - e0y
        tt = ((wx - e0x) * dx + (wy - e0y) * dy) / (dx * dx + dy * dy)
        if tt < 0.0:
            tt = 0.0
        elif tt > 1.0:
            tt = 1.0
        out[0] = best_phi
        out[1] = nx_
        out[2] = ny_
        out[3] = e0x + tt * dx
        out[4] = e0y + tt * dy
        return
    # separated: min over edges of segment-segment distance
    best = 1e300
    bs = 0.0
    bi = 0
    bt = 0.0
    for i in range(n_edges):
        j = (i + 1) % n_edges
        s, t, dist = _seg_seg_dist(ax, ay, bx, by, verts[i, 0], verts[i, 1],
                                   verts[j, 0], verts[j, 1])
        if dist < best:
            best = dist
            bs = s
            bt = t
            bi = i
    j = (bi + 1) % n_edges
    xx = ax + bs * (bx - ax)
    xy = ay + bs * (by - ay)
    wx = verts[bi, 0] + bt * (verts[j, 0] - verts[bi, 0])
    wy = verts[bi, 1] + bt * (verts[j, 1] - verts[bi, 1])
    out[0] = best
    if best > 1e-12:
        out[1] = (xx - wx) / best
        out[2] = (xy - wy) / best
    else:
        out[1] = normals[bi, 0]
        out[2] = normals[bi, 1]
    out[3] = wx
    out[4] = wy


@njit(cache=True)
def links_polygon_phi(starts, ends, radii, verts, normals, offsets,
                      phi, normal, witness):
    """All-links signed clearance against a world-frame polygon."""
    buf = np.empty(5)
    for k in range(starts.shape[0]):
        _link_vs_polygon(starts[k, 0], starts[k, 1], ends[k, 0], ends[k, 1],
                         verts, normals, offsets, buf)
        phi[k] = buf[0] - radii[k]
        normal[k, 0] = buf[1]
        normal[k, 1] = buf[2]
        witness[k, 0] = buf[3]
        witness[k, 1] = buf[4]


@njit(cache=True)
def settle(qu, qu0, body_verts, body_normals, body_centroid,
           starts, ends, radii, rot_l, tr_l,
           mt, mr, mu, kappa, rho, eps_t, settle_iters, settle_tol):
    """Relax the object pose under the smoothed contact wrench (robot frozen).

    qu is (x, y, theta) and is modified in place; qu0 is the pose at the start
    of the substep (slip reference). Mirrors sim._settle.
    """
    n_links = starts.shape[0]
    n_edges = body_verts.shape[0]
    verts = np.empty((n_edges, 2))
    normals = np.empty((n_edges, 2))
    offsets = np.empty(n_edges)
    phi = np.empty(n_links)
    nrm = np.empty((n_links, 2))
    wit = np.empty((n_links, 2))
    cutoff = 4.0 * rho
    c0 = np.cos(qu0[2])
    s0 = np.sin(qu0[2])
    for _ in range(settle_iters):
        cth = np.cos(qu[2])
        sth = np.sin(qu[2])
        for i in range(n_edges):
            vx = body_verts[i, 0]
            vy = body_verts[i, 1]
            verts[i, 0] = cth * vx - sth * vy + qu[0]
            verts[i, 1] = sth * vx + cth * vy + qu[1]
            nx_ = body_normals[i, 0]
            ny_ = body_normals[i, 1]
            normals[i, 0] = cth * nx_ - sth * ny_
            normals[i, 1] = sth * nx_ + cth * ny_
        for i in range(n_edges):
            offsets[i] = normals[i, 0] * verts[i, 0] + normals[i, 1] * verts[i, 1]
        links_polygon_phi(starts, ends, radii, verts, normals, offsets, phi, nrm, wit)
        cenx = cth * body_centroid[0] - sth * body_centroid[1] + qu[0]
        ceny = sth * body_centroid[0] + cth * body_centroid[1] + qu[1]
        wx = 0.0
        wy = 0.0
        wt = 0.0
        any_active = False
        for k in range(n_links):
            if phi[k] > cutoff:
                continue
            any_active = True
            x = -phi[k] / rho
            if x > 0.0:
                sp = np.log1p(np.exp(-x)) + x
            else:
                sp = np.log1p(np.exp(x))
            f = kappa * rho * sp
            px, py = wit[k, 0], wit[k, 1]
            nx_, ny_ = nrm[k, 0], nrm[k, 1]
            tx_, ty_ = -ny_, nx_
            # where was this world point at the substep start, on link and object
            plx = rot_l[k, 0, 0] * px + rot_l[k, 0, 1] * py + tr_l[k, 0]
            ply = rot_l[k, 1, 0] * px + rot_l[k, 1, 1] * py + tr_l[k, 1]
            bx_ = cth * (px - qu[0]) + sth * (py - qu[1])
            by_ = -sth * (px - qu[0]) + cth * (py - qu[1])
            pox = c0 * bx_ - s0 * by_ + qu0[0]
            poy = s0 * bx_ + c0 * by_ + qu0[1]
            u_t = (plx - pox) * tx_ + (ply - poy) * ty_
            ft = -mu * f * np.tanh(u_t / eps_t)
            fx = -f * nx_ + ft * tx_
            fy = -f * ny_ + ft * ty_
            wx += fx
            wy += fy
            wt += (px - cenx) * fy - (py - ceny) * fx
        if not any_active:
            break
        if np.sqrt(wx * wx + wy * wy + wt * wt) < settle_tol:
            break
        qu[0] += mt * wx
        qu[1] += mt * wy
        qu[2] += mr * wt


@njit(cache=True)
def chain_points(base_x, base_y, base_th, lengths, q, pts):
    """Joint origins (4, 2) of one arm."""
    pts[0, 0] = base_x
    pts[0, 1] = base_y
    h = base_th
    for i in range(3):
        h += q[i]
        pts[i + 1, 0] = pts[i, 0] + lengths[i] * np.cos(h)
        pts[i + 1, 1] = pts[i, 1] + lengths[i] * np.sin(h)


@njit(cache=True)
def configs_collide_any(configs, base_xy, base_th, lengths, link_radii,
                        verts, normals, offsets, threshold):
    """True if any configuration in the batch collides (early exit).

    Matches sim.collision_mask: link-object clearance below threshold, link
    endpoint containment, or arm-arm overlap.
    """
    m = configs.shape[0]
    n_edges = verts.shape[0]
    pts = np.empty((2, 4, 2))
    for ci in range(m):
        for a in range(2):
            chain_points(base_xy[a, 0], base_xy[a, 1], base_th[a], lengths[a],
                         configs[ci, 3 * a : 3 * a + 3], pts[a])
        collided = False
        for a in range(2):
            for l in range(3):
                ax, ay = pts[a, l, 0], pts[a, l, 1]
                bx, by = pts[a, l + 1, 0], pts[a, l + 1, 1]
                # endpoint containment
                in_a = True
                in_b = True
                for e in range(n_edges):
                    ma = normals[e, 0] * ax + normals[e, 1] * ay - offsets[e]
                    mb = normals[e, 0] * bx + normals[e, 1] * by - offsets[e]
                    if ma > 0.0:
                        in_a = False
                    if mb > 0.0:
                        in_b = False
                if in_a or in_b:
                    collided = True
                    break
                best = 1e300
                for e in range(n_edges):
                    e2 = (e + 1) % n_edges
                    _, _, dist = _seg_seg_dist(ax, ay, bx, by,
                                               verts[e, 0], verts[e, 1],
                                               verts[e2, 0], verts[e2, 1])
                    if dist < best:
                        best = dist
                if best - link_radii[a, l] < threshold:
                    collided = True
                    break
            if collided:
                break
        if not collided:
            for l0 in range(3):
                for l1 in range(3):
                    _, _, dist = _seg_seg_dist(
                        pts[0, l0, 0], pts[0, l0, 1], pts[0, l0 + 1, 0], pts[0, l0 + 1, 1],
                        pts[1, l1, 0], pts[1, l1, 1], pts[1, l1 + 1, 0], pts[1, l1 + 1, 1],
                    )
                    if dist - (link_radii[0, l0] + link_radii[1, l1]) < 0.0:
                        collided = True
                        break
                if collided:
                    break
        if collided:
            return True
    return False
