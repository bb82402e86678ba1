"""Compiled kernels for the hot paths: triangle-walk point location,
geodesic tracing, and parallel transport along precomputed traces.

Every kernel writes each geodesic's (or point's) result into its own
pre-assigned output slot, so results are bitwise independent of the thread
schedule and of the worker count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

METRIC_EUCLIDEAN = 0
METRIC_GAUSSIAN_PAIR = 1


# ---------------------------------------------------------------------------
# metric presets


@njit(cache=True, inline="always")
def _lambda_grad(kind, params, x, y):
    """(lam, d lam/dx, d lam/dy) for the log-conformal factor presets."""
    if kind == METRIC_EUCLIDEAN:
        return 0.0, 0.0, 0.0
    amp = params[0]
    x0 = params[1]
    tau = params[2]
    inv2t2 = 1.0 / (2.0 * tau * tau)
    dxp = x + x0
    dxm = x - x0
    gp = np.exp(-(dxp * dxp + y * y) * inv2t2)
    gm = np.exp(-(dxm * dxm + y * y) * inv2t2)
    lam = amp * (gp - gm)
    invt2 = 1.0 / (tau * tau)
    glx = amp * invt2 * (gm * dxm - gp * dxp)
    gly = amp * invt2 * (gm - gp) * y
    return lam, glx, gly


@njit(cache=True, inline="always")
def _geodesic_rhs(kind, params, x, y, th):
    lam, glx, gly = _lambda_grad(kind, params, x, y)
    s = np.exp(-lam)
    c = np.cos(th)
    sn = np.sin(th)
    return s * c, s * sn, s * (c * gly - sn * glx)


@njit(cache=True)
def _trace_one(kind, params, beta, alpha, h, max_steps, pts, store):
    """RK4 trace from the boundary until the first crossing of |x| = 1.

    The crossing is located by linear interpolation of |x|^2 - 1 over the
    last step and projected onto the circle.  Returns (n_points, exit_time);
    n_points = -1 signals the non-exiting step cap.  When store is false the
    pts buffer is untouched (counting pass).
    """
    x = np.cos(beta)
    y = np.sin(beta)
    th = beta + np.pi + alpha
    if store:
        pts[0, 0] = x
        pts[0, 1] = y
        pts[0, 2] = th
    f_prev = 0.0  # entry sits on the circle; clamp so roundoff cannot eject
    for step in range(max_steps):
        k1x, k1y, k1t = _geodesic_rhs(kind, params, x, y, th)
        k2x, k2y, k2t = _geodesic_rhs(
            kind, params, x + 0.5 * h * k1x, y + 0.5 * h * k1y, th + 0.5 * h * k1t
        )
        k3x, k3y, k3t = _geodesic_rhs(
            kind, params, x + 0.5 * h * k2x, y + 0.5 * h * k2y, th + 0.5 * h * k2t
        )
        k4x, k4y, k4t = _geodesic_rhs(
            kind, params, x + h * k3x, y + h * k3y, th + h * k3t
        )
        xn = x + h * (k1x + 2.0 * (k2x + k3x) + k4x) / 6.0
        yn = y + h * (k1y + 2.0 * (k2y + k3y) + k4y) / 6.0
        tn = th + h * (k1t + 2.0 * (k2t + k3t) + k4t) / 6.0
        f_new = xn * xn + yn * yn - 1.0
        if f_new > 0.0:
            s = f_prev / (f_prev - f_new)
            if s < 1e-12:
                s = 1e-12  # keep exit_time positive for grazing entries
            ex = x + s * (xn - x)
            ey = y + s * (yn - y)
            r = np.sqrt(ex * ex + ey * ey)
            if r > 0.0:
                ex /= r
                ey /= r
            if store:
                pts[step + 1, 0] = ex
                pts[step + 1, 1] = ey
                pts[step + 1, 2] = th + s * (tn - th)
            return step + 2, (step + s) * h
        x = xn
        y = yn
        th = tn
        f_prev = f_new if f_new < 0.0 else 0.0
        if store:
            pts[step + 1, 0] = x
            pts[step + 1, 1] = y
            pts[step + 1, 2] = th
    return -1, 0.0


@njit(cache=True, parallel=True)
def trace_counts(kind, params, beta, alpha, h, max_steps, n_points, exit_time):
    dummy = np.empty((1, 3))
    for g in prange(beta.size):
        n, t = _trace_one(kind, params, beta[g], alpha[g], h, max_steps, dummy, False)
        n_points[g] = n
        exit_time[g] = t


@njit(cache=True, parallel=True)
def trace_fill(kind, params, beta, alpha, h, max_steps, offsets, pts):
    for g in prange(beta.size):
        _trace_one(
            kind,
            params,
            beta[g],
            alpha[g],
            h,
            max_steps,
            pts[offsets[g] : offsets[g + 1]],
            True,
        )


# ---------------------------------------------------------------------------
# point location


@njit(cache=True, inline="always")
def _bary(vx, vy, a, b, c, px, py):
    ax = vx[a]
    ay = vy[a]
    det = (vx[b] - ax) * (vy[c] - ay) - (vx[c] - ax) * (vy[b] - ay)
    w1 = ((px - ax) * (vy[c] - ay) - (vx[c] - ax) * (py - ay)) / det
    w2 = ((vx[b] - ax) * (py - ay) - (px - ax) * (vy[b] - ay)) / det
    return 1.0 - w1 - w2, w1, w2


@njit(cache=True)
def walk_one(vx, vy, tris, neighbors, start, px, py):
    """Walk toward (px, py) across most-negative barycentric edges.

    Returns (triangle, w0, w1, w2, status); status 0 = inside, 1 = left the
    mesh through a boundary edge, 2 = cycle cap hit (caller scans).
    """
    nt = tris.shape[0]
    t = start
    for _ in range(nt + 1):
        w0, w1, w2 = _bary(vx, vy, tris[t, 0], tris[t, 1], tris[t, 2], px, py)
        if w0 >= -1e-12 and w1 >= -1e-12 and w2 >= -1e-12:
            return t, w0, w1, w2, 0
        k = 0
        wmin = w0
        if w1 < wmin:
            k = 1
            wmin = w1
        if w2 < wmin:
            k = 2
            wmin = w2
        nxt = neighbors[t, k]
        if nxt < 0:
            return t, w0, w1, w2, 1
        t = nxt
    return t, 0.0, 0.0, 0.0, 2


@njit(cache=True)
def brute_best(vx, vy, tris, px, py):
    """Scan all triangles for the one maximizing the minimum weight."""
    best_t = 0
    best = -1e300
    bw0 = bw1 = bw2 = 0.0
    for t in range(tris.shape[0]):
        w0, w1, w2 = _bary(vx, vy, tris[t, 0], tris[t, 1], tris[t, 2], px, py)
        m = min(w0, min(w1, w2))
        if m > best:
            best = m
            best_t = t
            bw0 = w0
            bw1 = w1
            bw2 = w2
    return best_t, bw0, bw1, bw2, best


@njit(cache=True, inline="always")
def _clamped(w0, w1, w2):
    if w0 < 0.0:
        w0 = 0.0
    if w1 < 0.0:
        w1 = 0.0
    if w2 < 0.0:
        w2 = 0.0
    s = w0 + w1 + w2
    return w0 / s, w1 / s, w2 / s


@njit(cache=True, parallel=True)
def locate_trace(vx, vy, tris, neighbors, offsets, px, py, tri_out, w_out):
    """Locate every trace point, chaining the walk hint along each ray.

    Points in the sliver between the polygon boundary and the circle are
    clamped onto the nearest triangle (weights clipped and renormalized).
    """
    for g in prange(offsets.size - 1):
        hint = 0
        for j in range(offsets[g], offsets[g + 1]):
            t, w0, w1, w2, status = walk_one(
                vx, vy, tris, neighbors, hint, px[j], py[j]
            )
            if status != 0:
                t, w0, w1, w2, _ = brute_best(vx, vy, tris, px[j], py[j])
            w0, w1, w2 = _clamped(w0, w1, w2)
            tri_out[j] = t
            w_out[j, 0] = w0
            w_out[j, 1] = w1
            w_out[j, 2] = w2
            hint = t


# ---------------------------------------------------------------------------
# transport


@njit(cache=True, parallel=True)
def transport_su2(b1, b2, b3, vidx, w, offsets, h, last_len, out):
    """Exit-value transport u' = -Phi(gamma(t)) u, u(0) = id, in SU(2).

    One step per consecutive point pair: exp(-l * (Phi_prev + Phi_cur)/2)
    via the closed form, l = h except on the final partial segment.  A step
    whose averaged coefficients vanish is skipped, so a zero field yields
    the identity bitwise.
    """
    for g in prange(offsets.size - 1):
        start = offsets[g]
        end = offsets[g + 1]
        u00 = 1.0 + 0.0j
        u01 = 0.0 + 0.0j
        u10 = 0.0 + 0.0j
        u11 = 1.0 + 0.0j
        c1p = w[start, 0] * b1[vidx[start, 0]] + w[start, 1] * b1[vidx[start, 1]] + w[start, 2] * b1[vidx[start, 2]]
        c2p = w[start, 0] * b2[vidx[start, 0]] + w[start, 1] * b2[vidx[start, 1]] + w[start, 2] * b2[vidx[start, 2]]
        c3p = w[start, 0] * b3[vidx[start, 0]] + w[start, 1] * b3[vidx[start, 1]] + w[start, 2] * b3[vidx[start, 2]]
        for j in range(start + 1, end):
            v0 = vidx[j, 0]
            v1 = vidx[j, 1]
            v2 = vidx[j, 2]
            c1 = w[j, 0] * b1[v0] + w[j, 1] * b1[v1] + w[j, 2] * b1[v2]
            c2 = w[j, 0] * b2[v0] + w[j, 1] * b2[v1] + w[j, 2] * b2[v2]
            c3 = w[j, 0] * b3[v0] + w[j, 1] * b3[v1] + w[j, 2] * b3[v2]
            l = h if j < end - 1 else last_len[g]
            m1 = -0.5 * l * (c1p + c1)
            m2 = -0.5 * l * (c2p + c2)
            m3 = -0.5 * l * (c3p + c3)
            c1p = c1
            c2p = c2
            c3p = c3
            q2 = m1 * m1 + m2 * m2 + m3 * m3
            if q2 == 0.0:
                continue
            n = 0.5 * np.sqrt(q2)
            cn = np.cos(n)
            if n < 1e-4:
                n2 = n * n
                sn = 1.0 - n2 / 6.0 + n2 * n2 / 120.0
            else:
                sn = np.sin(n) / n
            h1 = 0.5 * sn * m1
            h2 = 0.5 * sn * m2
            h3 = 0.5 * sn * m3
            e00 = cn + 1j * h1
            e01 = h2 + 1j * h3
            e10 = -h2 + 1j * h3
            e11 = cn - 1j * h1
            n00 = e00 * u00 + e01 * u10
            n01 = e00 * u01 + e01 * u11
            n10 = e10 * u00 + e11 * u10
            n11 = e10 * u01 + e11 * u11
            u00 = n00
            u01 = n01
            u10 = n10
            u11 = n11
        out[g, 0, 0] = u00
        out[g, 0, 1] = u01
        out[g, 1, 0] = u10
        out[g, 1, 1] = u11


@njit(cache=True, parallel=True)
def transport_so3(b1, b2, b3, vidx, w, offsets, h, last_len, out):
    """SO(3) variant of transport_su2 using the Rodrigues closed form."""
    for g in prange(offsets.size - 1):
        start = offsets[g]
        end = offsets[g + 1]
        u = np.eye(3)
        c1p = w[start, 0] * b1[vidx[start, 0]] + w[start, 1] * b1[vidx[start, 1]] + w[start, 2] * b1[vidx[start, 2]]
        c2p = w[start, 0] * b2[vidx[start, 0]] + w[start, 1] * b2[vidx[start, 1]] + w[start, 2] * b2[vidx[start, 2]]
        c3p = w[start, 0] * b3[vidx[start, 0]] + w[start, 1] * b3[vidx[start, 1]] + w[start, 2] * b3[vidx[start, 2]]
        for j in range(start + 1, end):
            v0 = vidx[j, 0]
            v1 = vidx[j, 1]
            v2 = vidx[j, 2]
            c1 = w[j, 0] * b1[v0] + w[j, 1] * b1[v1] + w[j, 2] * b1[v2]
            c2 = w[j, 0] * b2[v0] + w[j, 1] * b2[v1] + w[j, 2] * b2[v2]
            c3 = w[j, 0] * b3[v0] + w[j, 1] * b3[v1] + w[j, 2] * b3[v2]
            l = h if j < end - 1 else last_len[g]
            a1 = -0.5 * l * (c1p + c1)
            a2 = -0.5 * l * (c2p + c2)
            a3 = -0.5 * l * (c3p + c3)
            c1p = c1
            c2p = c2
            c3p = c3
            q2 = a1 * a1 + a2 * a2 + a3 * a3
            if q2 == 0.0:
                continue
            t = np.sqrt(q2)
            if t < 1e-4:
                t2 = t * t
                sc = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
                sh = 1.0 - t2 / 24.0 + t2 * t2 / 1920.0
            else:
                sc = np.sin(t) / t
                sh = np.sin(0.5 * t) / (0.5 * t)
            k = 0.5 * sh * sh
            r00 = 1.0 - k * (a2 * a2 + a3 * a3)
            r01 = sc * a3 + k * a1 * a2
            r02 = -sc * a2 + k * a1 * a3
            r10 = -sc * a3 + k * a1 * a2
            r11 = 1.0 - k * (a1 * a1 + a3 * a3)
            r12 = sc * a1 + k * a2 * a3
            r20 = sc * a2 + k * a1 * a3
            r21 = -sc * a1 + k * a2 * a3
            r22 = 1.0 - k * (a1 * a1 + a2 * a2)
            n00 = r00 * u[0, 0] + r01 * u[1, 0] + r02 * u[2, 0]
            n01 = r00 * u[0, 1] + r01 * u[1, 1] + r02 * u[2, 1]
            n02 = r00 * u[0, 2] + r01 * u[1, 2] + r02 * u[2, 2]
            n10 = r10 * u[0, 0] + r11 * u[1, 0] + r12 * u[2, 0]
            n11 = r10 * u[0, 1] + r11 * u[1, 1] + r12 * u[2, 1]
            n12 = r10 * u[0, 2] + r11 * u[1, 2] + r12 * u[2, 2]
            n20 = r20 * u[0, 0] + r21 * u[1, 0] + r22 * u[2, 0]
            n21 = r20 * u[0, 1] + r21 * u[1, 1] + r22 * u[2, 1]
            n22 = r20 * u[0, 2] + r21 * u[1, 2] + r22 * u[2, 2]
            u[0, 0] = n00
            u[0, 1] = n01
            u[0, 2] = n02
            u[1, 0] = n10
            u[1, 1] = n11
            u[1, 2] = n12
            u[2, 0] = n20
            u[2, 1] = n21
            u[2, 2] = n22
        out[g] = u
