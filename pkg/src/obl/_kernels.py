"""Compiled geometry and billiard-map kernels.

A curve is packed into a flat tuple ``geo = (kind, scal, ks, ak, bk, bumps)``:

* ``kind`` 0: radius-of-curvature Fourier series, ``scal[0] = a0``;
* ``kind`` 1: ellipse with semi-axes ``scal[1] >= scal[2]``;
* ``bumps``: ``(nb, 3)`` rows ``(center, half_width, h)`` of normal bumps
  applied to the base along its inward normal, in the base tangent angle.

Every kernel takes the *phase coordinate*: the tangent angle of the (possibly
perturbed) curve.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

KIND_FOURIER = 0
KIND_ELLIPSE = 1

# status codes for the map kernel
OK = 0
NO_CONVERGENCE = 1
BAD_BRACKET = 2


@njit(cache=True, inline="always")
def wrap_pi(x):
    """Reduce to (-pi, pi]."""
    y = (x + math.pi) - math.floor((x + math.pi) / TWO_PI) * TWO_PI
    if y <= 0.0:
        y += TWO_PI
    return y - math.pi


# -- bump profile -----------------------------------------------------------
# lambda(u) = (h/2) delta^2 Q(u/delta), Q(s) = s^2 (1-s^2)^3 (1+3 s^2)


@njit(cache=True)
def bump_eval(center, delta, h, phi):
    u = wrap_pi(phi - center)
    if abs(u) >= delta or h == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    s = u / delta
    s2 = s * s
    s4 = s2 * s2
    s6 = s4 * s2
    s8 = s4 * s4
    q0 = s2 - 6.0 * s6 + 8.0 * s8 - 3.0 * s8 * s2
    q1 = s * (2.0 - 36.0 * s4 + 64.0 * s6 - 30.0 * s8)
    q2 = 2.0 - 180.0 * s4 + 448.0 * s6 - 270.0 * s8
    q3 = s2 * s * (-720.0 + 2688.0 * s2 - 2160.0 * s4)
    half = 0.5 * h
    return half * delta * delta * q0, half * delta * q1, half * q2, half * q3 / delta


@njit(cache=True)
def bumps_eval(bumps, phi):
    l0 = 0.0
    l1 = 0.0
    l2 = 0.0
    l3 = 0.0
    for j in range(bumps.shape[0]):
        a, b, c, d = bump_eval(bumps[j, 0], bumps[j, 1], bumps[j, 2], phi)
        l0 += a
        l1 += b
        l2 += c
        l3 += d
    return l0, l1, l2, l3


@njit(cache=True, inline="always")
def in_support(bumps, phi):
    for j in range(bumps.shape[0]):
        if bumps[j, 2] != 0.0 and abs(wrap_pi(phi - bumps[j, 0])) < bumps[j, 1]:
            return True
    return False


# -- base curves in their own tangent angle ---------------------------------


@njit(cache=True, inline="always")
def fourier_eval(a0, ks, ak, bk, phi):
    """Position, R and dR/dphi of the Fourier oval at tangent angle ``phi``."""
    c = math.cos(phi)
    s = math.sin(phi)
    x = a0 * s
    y = a0 * (1.0 - c)
    r = a0
    dr = 0.0
    for j in range(ks.shape[0]):
        k = ks[j]
        a = ak[j]
        b = bk[j]
        kf = float(k)
        ck = math.cos(k * phi)
        sk = math.sin(k * phi)
        # (k -+ 1) phi by angle addition
        cm = ck * c + sk * s
        sm = sk * c - ck * s
        cp = ck * c - sk * s
        sp = sk * c + ck * s
        r += a * ck + b * sk
        dr += kf * (b * ck - a * sk)
        km = kf - 1.0
        kp = kf + 1.0
        x += 0.5 * a * (sm / km + sp / kp) + 0.5 * b * ((1.0 - cp) / kp + (1.0 - cm) / km)
        y += 0.5 * a * ((1.0 - cp) / kp - (1.0 - cm) / km) + 0.5 * b * (sm / km - sp / kp)
    return x, y, r, dr


@njit(cache=True, inline="always")
def ellipse_param(a, b, phi):
    """Native parameter t of the ellipse point with tangent angle phi."""
    return math.atan2(-math.cos(phi) / a, math.sin(phi) / b)


@njit(cache=True, inline="always")
def ellipse_eval(a, b, phi):
    t = ellipse_param(a, b, phi)
    ct = math.cos(t)
    st = math.sin(t)
    ss = a * a * st * st + b * b * ct * ct
    ab = a * b
    r = ss ** 1.5 / ab
    dr = 3.0 * ss ** 1.5 * (a * a - b * b) * st * ct / (ab * ab)
    return a * ct, b * st, r, dr


@njit(cache=True, inline="always")
def base_eval(geo, phi):
    kind, scal, ks, ak, bk, bumps = geo
    if kind == KIND_FOURIER:
        return fourier_eval(scal[0], ks, ak, bk, phi)
    return ellipse_eval(scal[1], scal[2], phi)


# -- perturbed curve --------------------------------------------------------


@njit(cache=True)
def perturbed_frame(geo, phi):
    """Perturbed curve data at base tangent angle ``phi``.

    Returns (x, y, psi, Rt, psi') where psi is the perturbed tangent angle,
    Rt the perturbed radius of curvature and psi' = dpsi/dphi.
    """
    kind, scal, ks, ak, bk, bumps = geo
    x, y, r, dr = base_eval(geo, phi)
    l0, l1, l2, l3 = bumps_eval(bumps, phi)
    # beta' = (R - l) t + l' n ; beta'' = (R' - 2 l') t + (R - l + l'') n
    p = r - l0
    q = l1
    cross = p * (r - l0 + l2) - q * (dr - 2.0 * l1)
    speed2 = p * p + q * q
    rt = speed2 ** 1.5 / cross
    psi = phi + math.atan2(q, p)
    x -= l0 * math.sin(phi)
    y += l0 * math.cos(phi)
    return x, y, psi, rt, cross / speed2


@njit(cache=True)
def base_phi(geo, psi):
    """Invert the perturbed tangent angle: base phi with tangent angle psi."""
    bumps = geo[5]
    if bumps.shape[0] == 0 or not in_support(bumps, psi):
        return psi
    phi = psi
    for _ in range(60):
        x, y, ps, rt, dps = perturbed_frame(geo, phi)
        step = (ps - psi) / dps
        phi -= step
        if abs(step) < 1e-15:
            break
    return phi


@njit(cache=True, inline="always")
def geom(geo, psi):
    """Position and radius of curvature at phase coordinate ``psi``."""
    bumps = geo[5]
    if bumps.shape[0] == 0 or not in_support(bumps, psi):
        x, y, r, dr = base_eval(geo, psi)
        return x, y, r
    phi = base_phi(geo, psi)
    x, y, ps, rt, dps = perturbed_frame(geo, phi)
    return x, y, rt


@njit(cache=True)
def geom_dr(geo, psi):
    """Position, R and dR/dpsi at phase coordinate ``psi``."""
    bumps = geo[5]
    if bumps.shape[0] == 0 or not in_support(bumps, psi):
        x, y, r, dr = base_eval(geo, psi)
        return x, y, r, dr
    x, y, r = geom(geo, psi)
    e = 1e-6
    xa, ya, ra = geom(geo, psi + e)
    xb, yb, rb = geom(geo, psi - e)
    return x, y, r, (ra - rb) / (2.0 * e)


@njit(cache=True)
def geom_many(geo, psi):
    n = psi.shape[0]
    out = np.empty((n, 4))
    for i in range(n):
        x, y, r, dr = geom_dr(geo, psi[i])
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = r
        out[i, 3] = dr
    return out


# -- billiard map -----------------------------------------------------------


@njit(cache=True, inline="always")
def chord_angle(c0, s0, dx, dy):
    """Angle from the tangent (c0, s0) to the chord (dx, dy), in (-pi/2, 3pi/2)."""
    g = math.atan2(c0 * dy - s0 * dx, c0 * dx + s0 * dy)
    if g < -0.5 * math.pi:
        g += TWO_PI
    return g


@njit(cache=True)
def forward(geo, phi0, th0, tol, maxiter):
    """One billiard step.

    Returns (phi1_lifted, th1, R0, R1, chord, status) with phi1_lifted in
    (phi0, phi0 + 2 pi).
    """
    base = math.floor(phi0 / TWO_PI) * TWO_PI
    phi0 = phi0 - base
    x0, y0, r0 = geom(geo, phi0)
    c0 = math.cos(phi0)
    s0 = math.sin(phi0)
    lo = phi0
    hi = phi0 + TWO_PI
    psi = phi0 + 2.0 * th0
    if psi <= lo or psi >= hi:
        psi = 0.5 * (lo + hi)
    status = NO_CONVERGENCE
    for _ in range(maxiter):
        x, y, r = geom(geo, psi)
        dx = x - x0
        dy = y - y0
        g = chord_angle(c0, s0, dx, dy)
        f = g - th0
        if f < 0.0:
            lo = psi
        elif f > 0.0:
            hi = psi
        else:
            status = OK
            break
        dist = math.hypot(dx, dy)
        gp = r * math.sin(psi - phi0 - g) / dist
        if gp > 0.0:
            step = f / gp
            if abs(step) < tol:
                # a Newton step this short leaves a quadratically small error
                if lo < psi - step < hi:
                    psi -= step
                status = OK
                break
            new = psi - step
        else:
            new = 0.5 * (lo + hi)
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        psi = new
        if hi - lo < 4e-16 * (1.0 + abs(psi)):
            status = OK
            break
    x, y, r = geom(geo, psi)
    dx = x - x0
    dy = y - y0
    c1 = math.cos(psi)
    s1 = math.sin(psi)
    th1 = math.atan2(dx * s1 - dy * c1, dx * c1 + dy * s1)
    if not (0.0 < th1 < math.pi):
        status = BAD_BRACKET
    return psi + base, th1, r0, r, math.hypot(dx, dy), status


@njit(cache=True)
def forward_many(geo, phi, th, inverse, tol, maxiter):
    n = phi.shape[0]
    out = np.empty((n, 5))
    status = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if inverse:
            p1, t1, r0, r1, l, st = forward(geo, phi[i], math.pi - th[i], tol, maxiter)
            out[i, 0] = p1 - TWO_PI
            out[i, 1] = math.pi - t1
        else:
            p1, t1, r0, r1, l, st = forward(geo, phi[i], th[i], tol, maxiter)
            out[i, 0] = p1
            out[i, 1] = t1
        out[i, 2] = r0
        out[i, 3] = r1
        out[i, 4] = l
        status[i] = st
    return out, status


@njit(cache=True)
def iterate_many(geo, phi, th, steps, inverse, tol, maxiter):
    """Advance every point ``steps`` times; return final lifted phi, theta, worst status."""
    n = phi.shape[0]
    pf = phi.copy()
    tf = th.copy()
    worst = 0
    for i in range(n):
        p = pf[i]
        t = tf[i]
        for _ in range(steps):
            if inverse:
                p1, t1, r0, r1, l, st = forward(geo, p, math.pi - t, tol, maxiter)
                p = p1 - TWO_PI
                t = math.pi - t1
            else:
                p1, t1, r0, r1, l, st = forward(geo, p, t, tol, maxiter)
                p = p1
                t = t1
            if st > worst:
                worst = st
        pf[i] = p
        tf[i] = t
    return pf, tf, worst


@njit(cache=True)
def trajectory(geo, phi, th, steps, inverse, tol, maxiter):
    """Lifted orbit of one point: array (steps + 1, 2)."""
    out = np.empty((steps + 1, 2))
    out[0, 0] = phi
    out[0, 1] = th
    p = phi
    t = th
    worst = 0
    for k in range(steps):
        if inverse:
            p1, t1, r0, r1, l, st = forward(geo, p, math.pi - t, tol, maxiter)
            p = p1 - TWO_PI
            t = math.pi - t1
        else:
            p1, t1, r0, r1, l, st = forward(geo, p, t, tol, maxiter)
            p = p1
            t = t1
        if st > worst:
            worst = st
        out[k + 1, 0] = p
        out[k + 1, 1] = t
    return out, worst
