"""Compiled in-place filter kernels.

Every array argument is mutated in place. Layout of the error state:
camera position 0:3, orientation 3:6, velocity 6:9, landmarks (3 each) in
insertion order, then clones (position 3 + orientation 3 each).
"""

import numpy as np
from numba import njit

# update() status codes
ACCEPTED = 0
GATED = 1
BEHIND_CAMERA = 2
SINGULAR = 3

DEPTH_FLOOR = 1e-6


@njit(cache=True)
def quat_rot(q, R):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def rotate_left(q, r0, r1, r2):
    """q <- exp(r) * q, renormalized onto w >= 0."""
    th2 = r0 * r0 + r1 * r1 + r2 * r2
    th = np.sqrt(th2)
    if th < 1e-8:
        ew = 1.0 - th2 / 8.0
        s = 0.5 - th2 / 48.0
    else:
        ew = np.cos(0.5 * th)
        s = np.sin(0.5 * th) / th
    ex, ey, ez = r0 * s, r1 * s, r2 * s
    w, x, y, z = q[0], q[1], q[2], q[3]
    nw = ew * w - ex * x - ey * y - ez * z
    nx = ew * x + ex * w + ey * z - ez * y
    ny = ew * y - ex * z + ey * w + ez * x
    nz = ew * z + ex * y - ey * x + ez * w
    n = np.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    if nw < 0:
        n = -n
    q[0] = nw / n
    q[1] = nx / n
    q[2] = ny / n
    q[3] = nz / n


@njit(cache=True)
def propagate(P, p, v, dt, var_a, var_w):
    """Constant-velocity prediction; F couples position to velocity."""
    n = P.shape[0]
    for i in range(3):
        p[i] += v[i] * dt
    # rows 0:3 += dt * rows 6:9, then columns likewise (F P F^T)
    for i in range(3):
        for j in range(n):
            P[i, j] += dt * P[6 + i, j]
    for j in range(3):
        for i in range(n):
            P[i, j] += dt * P[i, 6 + j]
    # the two passes round differently; mirror rows 0:3 to keep P exactly symmetric
    for i in range(3):
        for j in range(n):
            P[j, i] = P[i, j]
    for i in range(3):
        P[3 + i, 3 + i] += var_w * dt
        P[6 + i, 6 + i] += var_a * dt


@njit(cache=True)
def compose(p, q, v, lm, cp, cq, delta):
    for i in range(3):
        p[i] += delta[i]
        v[i] += delta[6 + i]
    rotate_left(q, delta[3], delta[4], delta[5])
    m = lm.shape[0]
    for k in range(m):
        for i in range(3):
            lm[k, i] += delta[9 + 3 * k + i]
    off = 9 + 3 * m
    for k in range(cp.shape[0]):
        o = off + 6 * k
        for i in range(3):
            cp[k, i] += delta[o + i]
        rotate_left(cq[k], delta[o + 3], delta[o + 4], delta[o + 5])


@njit(cache=True)
def reset(P, dtheta):
    """P <- G P G^T with G = I except the camera orientation block I - [dtheta/2]x."""
    a0, a1, a2 = 0.5 * dtheta[0], 0.5 * dtheta[1], 0.5 * dtheta[2]
    if a0 == 0.0 and a1 == 0.0 and a2 == 0.0:
        return
    G = np.empty((3, 3))
    G[0, 0] = 1.0
    G[0, 1] = a2
    G[0, 2] = -a1
    G[1, 0] = -a2
    G[1, 1] = 1.0
    G[1, 2] = a0
    G[2, 0] = a1
    G[2, 1] = -a0
    G[2, 2] = 1.0
    n = P.shape[0]
    tmp = np.empty((3, n))
    for i in range(3):
        for j in range(n):
            tmp[i, j] = G[i, 0] * P[3, j] + G[i, 1] * P[4, j] + G[i, 2] * P[5, j]
    for i in range(3):
        for j in range(n):
            P[3 + i, j] = tmp[i, j]
    for j in range(n):
        c0, c1, c2 = P[j, 3], P[j, 4], P[j, 5]
        for i in range(3):
            P[j, 3 + i] = c0 * G[i, 0] + c1 * G[i, 1] + c2 * G[i, 2]


@njit(cache=True)
def update(P, p, q, v, lm, cp, cq, k, z, intr, var_px, gate, out):
    """One asynchronous measurement update of landmark slot ``k``.

    ``intr`` = (fx, fy, cx, cy); ``gate`` <= 0 disables gating.
    ``out`` receives (innov_u, innov_v, S00, S01, S11, mahalanobis).
    Returns a status code.
    """
    n = P.shape[0]
    R = np.empty((3, 3))
    quat_rot(q, R)
    d0 = lm[k, 0] - p[0]
    d1 = lm[k, 1] - p[1]
    d2 = lm[k, 2] - p[2]
    X = R[0, 0] * d0 + R[1, 0] * d1 + R[2, 0] * d2
    Y = R[0, 1] * d0 + R[1, 1] * d1 + R[2, 1] * d2
    Z = R[0, 2] * d0 + R[1, 2] * d1 + R[2, 2] * d2
    if Z <= DEPTH_FLOOR:
        return BEHIND_CAMERA
    fx, fy, cx, cy = intr[0], intr[1], intr[2], intr[3]
    iz = 1.0 / Z
    y0 = z[0] - (fx * X * iz + cx)
    y1 = z[1] - (fy * Y * iz + cy)

    # J = d(pixel)/d(camera point); Hf = J R^T, Hp = -Hf, Hr = Hf [d]x
    J = np.zeros((2, 3))
    J[0, 0] = fx * iz
    J[0, 2] = -fx * X * iz * iz
    J[1, 1] = fy * iz
    J[1, 2] = -fy * Y * iz * iz
    Hf = np.empty((2, 3))
    for a in range(2):
        for c in range(3):
            Hf[a, c] = J[a, 0] * R[c, 0] + J[a, 1] * R[c, 1] + J[a, 2] * R[c, 2]
    H = np.empty((2, 9))
    idx = np.empty(9, dtype=np.int64)
    for a in range(2):
        h0, h1, h2 = Hf[a, 0], Hf[a, 1], Hf[a, 2]
        H[a, 0] = -h0
        H[a, 1] = -h1
        H[a, 2] = -h2
        # row of Hf @ skew(d)
        H[a, 3] = h1 * d2 - h2 * d1
        H[a, 4] = h2 * d0 - h0 * d2
        H[a, 5] = h0 * d1 - h1 * d0
        H[a, 6] = h0
        H[a, 7] = h1
        H[a, 8] = h2
    lo = 9 + 3 * k
    for c in range(6):
        idx[c] = c
    for c in range(3):
        idx[6 + c] = lo + c

    # P is symmetric, so P H^T is assembled from contiguous rows
    u0 = np.zeros(n)
    u1 = np.zeros(n)
    for c in range(9):
        row = P[idx[c]]
        h0 = H[0, c]
        h1 = H[1, c]
        for i in range(n):
            u0[i] += row[i] * h0
            u1[i] += row[i] * h1
    S00 = var_px
    S01 = 0.0
    S10 = 0.0
    S11 = var_px
    for c in range(9):
        r = idx[c]
        S00 += H[0, c] * u0[r]
        S01 += H[0, c] * u1[r]
        S10 += H[1, c] * u0[r]
        S11 += H[1, c] * u1[r]
    S01 = 0.5 * (S01 + S10)
    det = S00 * S11 - S01 * S01
    out[0] = y0
    out[1] = y1
    out[2] = S00
    out[3] = S01
    out[4] = S11
    if not (det > 1e-15 * S00 * S11) or not (S00 > 0.0):
        out[5] = np.nan
        return SINGULAR
    i00 = S11 / det
    i01 = -S01 / det
    i11 = S00 / det
    maha = y0 * (i00 * y0 + i01 * y1) + y1 * (i01 * y0 + i11 * y1)
    out[5] = maha
    if gate > 0.0 and maha > gate:
        return GATED

    # S = L L^T; with A = P H^T L^-T the Joseph-free update is P <- P - A A^T,
    # whose entries are exactly symmetric because scalar products commute
    l00 = np.sqrt(S00)
    l10 = S01 / l00
    l11 = np.sqrt(S11 - l10 * l10)
    a0 = np.empty(n)
    a1 = np.empty(n)
    delta = np.empty(n)
    # L^-1 y
    w0 = y0 / l00
    w1 = (y1 - l10 * w0) / l11
    for i in range(n):
        x0 = u0[i] / l00
        x1 = (u1[i] - l10 * x0) / l11
        a0[i] = x0
        a1[i] = x1
        delta[i] = x0 * w0 + x1 * w1
    for i in range(n):
        ai0 = a0[i]
        ai1 = a1[i]
        row = P[i]
        for j in range(n):
            row[j] -= ai0 * a0[j] + ai1 * a1[j]
    compose(p, q, v, lm, cp, cq, delta)
    reset(P, delta[3:6])
    return ACCEPTED


@njit(cache=True)
def update_batch(P, p, q, v, lm, cp, cq, slots, dts, zs, intr, var_a, var_w, var_px, gate, codes, maha):
    """Propagate by ``dts[i]`` then update slot ``slots[i]`` for every row.

    Stops at the first behind-camera or singular measurement and returns its
    row index; returns the row count when every row was processed.
    """
    out = np.empty(6)
    z = np.empty(2)
    for i in range(slots.shape[0]):
        if dts[i] > 0.0:
            propagate(P, p, v, dts[i], var_a, var_w)
        z[0] = zs[i, 0]
        z[1] = zs[i, 1]
        c = update(P, p, q, v, lm, cp, cq, slots[i], z, intr, var_px, gate, out)
        codes[i] = c
        maha[i] = out[5]
        if c == BEHIND_CAMERA or c == SINGULAR:
            return i
    return slots.shape[0]
