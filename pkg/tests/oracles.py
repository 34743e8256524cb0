"""Brute-force reference implementations used as test oracles.

Everything here is written from the model definitions with direct loops and
no reuse of partial sums, so it shares no code path with the package beyond
the input containers.
"""

import math

import mpmath
import numpy as np

RATIO_CLAMP = 1e-12
GAMMA_CLAMP = 1.0 - 1e-9


def neglog_delta1_abc(u1x, u2x, u1y, u2y, theta=0.0, dps=30):
    """-log of the pixel-pair likelihood from its A, B, C form, in mpmath.

    ``theta`` is subtracted from the phase of pixel y first. C/A is clamped
    to [1e-12, 1 - 1e-12] like the package does.
    """
    with mpmath.workdps(dps):
        a1x, a2x = mpmath.mpf(abs(u1x)), mpmath.mpf(abs(u2x))
        a1y, a2y = mpmath.mpf(abs(u1y)), mpmath.mpf(abs(u2y))
        phx = mpmath.arg(mpmath.mpc(u1x) * mpmath.conj(mpmath.mpc(u2x)))
        phy = mpmath.arg(mpmath.mpc(u1y) * mpmath.conj(mpmath.mpc(u2y))) - theta
        A = (a1x**2 + a2x**2 + a1y**2 + a2y**2) ** 2
        B = a1x * a2x * a1y * a2y
        if A == 0 or B == 0:
            return math.inf
        C = 4 * (a1x**2 * a2x**2 + a1y**2 * a2y**2 + 2 * B * mpmath.cos(phx - phy))
        r = min(max(C / A, mpmath.mpf(RATIO_CLAMP)), 1 - mpmath.mpf(RATIO_CLAMP))
        C = r * A
        bracket = (A + C) / A * mpmath.sqrt(C / (A - C)) - mpmath.asin(mpmath.sqrt(C / A))
        return float(-1.5 * mpmath.log(B / C) - mpmath.log(bracket))


def kl_divergence(ix, gx, px, iy, gy, py):
    """Symmetric KL divergence of two zero-mean complex circular Gaussian models."""
    t1 = ix / iy * (1 - gx * gy * np.cos(px - py)) / (1 - gy * gy)
    t2 = iy / ix * (1 - gy * gx * np.cos(py - px)) / (1 - gx * gx)
    return 4 / math.pi * (t1 + t2 - 2)


def _offsets(R):
    return [(a, b) for a in range(-R, R + 1) for b in range(-R, R + 1)]


def _inside(p, shape):
    return 0 <= p[0] < shape[0] and 0 <= p[1] < shape[1]


def _weights(D, scale, centre_index):
    """Row-wise exponential kernel; rows without a finite entry keep the centre."""
    W = np.zeros_like(D)
    for x in range(D.shape[0]):
        row = D[x]
        fin = np.isfinite(row)
        if not fin.any():
            W[x, centre_index] = 1.0
            continue
        e = np.where(fin, np.exp(-(np.where(fin, row, 0.0) - row[fin].min()) / scale[x]), 0.0)
        W[x] = e / e.sum()
    L = 1.0 / (W**2).sum(axis=1)
    return W, L


def _aggregate(pair, W, L, R, P, window, fringe):
    """Direct sum over output pixels, covering centres and search offsets.

    ``window(x, o)`` gives the aggregation weight of centre x at patch offset o.
    The offset sum is a numpy dot product over the search window of each
    (pixel, centre) pair.
    """
    u1, u2 = pair.master, pair.slave
    z = u1 * np.conj(u2)
    shape = z.shape
    H, Wd = shape
    offs = np.array(_offsets(R))
    phase = np.empty(shape)
    inten = np.empty(shape)
    coh = np.empty(shape)
    enl = np.empty(shape)
    for pr in range(H):
        for pc in range(Wd):
            qr, qc = pr + offs[:, 0], pc + offs[:, 1]
            ok = (qr >= 0) & (qr < H) & (qc >= 0) & (qc < Wd)
            qr, qc = np.where(ok, qr, 0), np.where(ok, qc, 0)
            v = np.where(ok, z[qr, qc], 0)
            if fringe is not None:
                v = v * np.exp(-1j * (offs[:, 1] * fringe.f_range[pr, pc] + offs[:, 0] * fringe.f_azimuth[pr, pc]))
            a1 = np.where(ok, abs(u1[qr, qc]) ** 2, 0.0)
            a2 = np.where(ok, abs(u2[qr, qc]) ** 2, 0.0)
            mask = ok.astype(float)
            num = 0j
            p1 = p2 = den = 0.0
            lsum = l2sum = 0.0
            for a in range(-P, P + 1):
                for b in range(-P, P + 1):
                    x = (pr + a, pc + b)
                    if not _inside(x, shape):
                        continue
                    xi = x[0] * Wd + x[1]
                    g = window(x, (pr - x[0], pc - x[1]))
                    lsum += g * L[xi]
                    l2sum += g * L[xi] * L[xi]
                    w = g * L[xi] * W[xi]
                    num += np.dot(w, v)
                    p1 += np.dot(w, a1)
                    p2 += np.dot(w, a2)
                    den += np.dot(w, mask)
            zm, m1, m2 = num / den, p1 / den, p2 / den
            phase[pr, pc] = np.angle(zm)
            inten[pr, pc] = 0.5 * (m1 + m2)
            coh[pr, pc] = min(abs(zm) / math.sqrt(m1 * m2), 1.0)
            enl[pr, pc] = l2sum / lsum
    return phase, inten, coh, enl


def stage1(pair, h=4.0, R=10, P=3, fringe=None):
    """Reference first stage: (phase, intensity, coherence, enl, W, L).

    ``W`` is indexed ``[centre (row-major), offset (row-major)]``.
    """
    u1, u2 = pair.master, pair.slave
    shape = u1.shape
    H, Wd = shape
    offs = _offsets(R)
    # pixel-pair terms, one per (p, d)
    T = np.full((H, Wd, len(offs)), np.nan)
    for pr in range(H):
        for pc in range(Wd):
            for k, (dr, dc) in enumerate(offs):
                q = (pr + dr, pc + dc)
                if not _inside(q, shape):
                    continue
                theta = 0.0
                if fringe is not None:
                    theta = 0.5 * (dr * (fringe.f_azimuth[pr, pc] + fringe.f_azimuth[q])
                                   + dc * (fringe.f_range[pr, pc] + fringe.f_range[q]))
                T[pr, pc, k] = neglog_delta1_abc(u1[pr, pc], u2[pr, pc], u1[q], u2[q], theta)
    full = (2 * P + 1) ** 2
    D = np.full((H * Wd, len(offs)), np.inf)
    for xr in range(H):
        for xc in range(Wd):
            for k, (dr, dc) in enumerate(offs):
                if not _inside((xr + dr, xc + dc), shape):
                    continue
                total, n = 0.0, 0
                for a in range(-P, P + 1):
                    for b in range(-P, P + 1):
                        p = (xr + a, xc + b)
                        if _inside(p, shape) and _inside((p[0] + dr, p[1] + dc), shape):
                            total += T[p[0], p[1], k]
                            n += 1
                D[xr * Wd + xc, k] = total * full / n
    centre = offs.index((0, 0))
    others = np.delete(D, centre, axis=1)
    best = others.min(axis=1)
    D[:, centre] = np.where(np.isfinite(best), best, D[:, centre])
    W, L = _weights(D, np.full(H * Wd, h), centre)
    out = _aggregate(pair, W, L, R, P, lambda x, o: 1.0, fringe)
    return (*out, W, L)


def stage2(pair, guide, eta, xi, h=2.0, R=10, P=5, fringe=None):
    """Reference second stage on a guidance bundle: (phase, intensity, coherence, enl, W, L)."""
    shape = guide.phase.shape
    H, Wd = shape
    I = np.maximum(guide.intensity, 1e-12 * max(float(guide.intensity.mean()), np.finfo(float).tiny))
    G = np.clip(guide.coherence, 0.0, GAMMA_CLAMP)
    Ph = guide.phase
    sigma = 2.0 * (1.0 - np.asarray(eta)) + 1.0
    offs = _offsets(R)

    def g(x, o):
        return math.exp(-(o[0] ** 2 + o[1] ** 2) / (2.0 * sigma[x] ** 2))

    D = np.full((H * Wd, len(offs)), np.inf)
    for xr in range(H):
        for xc in range(Wd):
            x = (xr, xc)
            for k, (dr, dc) in enumerate(offs):
                if not _inside((xr + dr, xc + dc), shape):
                    continue
                theta = 0.0
                if fringe is not None:
                    theta = dc * fringe.f_range[x] + dr * fringe.f_azimuth[x]
                a = np.arange(max(-P, -xr, -xr - dr), min(P, H - 1 - xr, H - 1 - xr - dr) + 1)
                b = np.arange(max(-P, -xc, -xc - dc), min(P, Wd - 1 - xc, Wd - 1 - xc - dc) + 1)
                aa, bb = (m.ravel() for m in np.meshgrid(a, b, indexing="ij"))
                p = (xr + aa, xc + bb)
                q = (p[0] + dr, p[1] + dc)
                w = np.exp(-(aa**2 + bb**2) / (2.0 * sigma[x] ** 2))
                vals = kl_divergence(I[p], G[p], Ph[p], I[q], G[q], Ph[q] - theta)
                D[xr * Wd + xc, k] = max(np.sum(w * vals) / np.sum(w), 0.0)
    t = 1.0 / sigma.ravel()
    xi_t = np.maximum(xi[0] + xi[1] * t + xi[2] * t * t, 1e-12)
    W, L = _weights(D, h * xi_t, offs.index((0, 0)))
    out = _aggregate(pair, W, L, R, P, g, fringe)
    return (*out, W, L)


def boxcar(pair, k):
    """Direct clipped-window multilook: (phase, intensity, coherence, enl)."""
    u1, u2 = pair.master, pair.slave
    H, Wd = u1.shape
    half = k // 2
    out = [np.empty((H, Wd)) for _ in range(4)]
    for r in range(H):
        for c in range(Wd):
            sl = (slice(max(r - half, 0), r + half + 1), slice(max(c - half, 0), c + half + 1))
            a, b = u1[sl], u2[sl]
            zm = np.mean(a * np.conj(b))
            m1, m2 = np.mean(abs(a) ** 2), np.mean(abs(b) ** 2)
            out[0][r, c] = np.angle(zm)
            out[1][r, c] = 0.5 * (m1 + m2)
            out[2][r, c] = abs(zm) / math.sqrt(m1 * m2)
            out[3][r, c] = a.size
    return out
