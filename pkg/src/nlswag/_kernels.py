"""Compiled inner loops for the nonlocal filter.

Every kernel writes each output pixel from exactly one loop iteration with a
fixed summation order, so results do not depend on the number of threads.
Loops over columns go through 1-D slice views so LLVM can vectorise them.
``prange`` hands out unsigned indices, so each row index is cast to a signed
integer before any offset arithmetic.
"""

import math

import numba as nb
import numpy as np

EPS_RATIO = 1e-12
SERIES_CUTOFF = 0.02

# bracket(r) = sqrt(r) * r * P(r) with P from the Taylor expansion at r = 0
_SERIES = np.array([
    4 / 3, 4 / 5, 9 / 14, 5 / 9, 175 / 352, 189 / 416, 539 / 1280,
    429 / 1088, 57915 / 155648, 60775 / 172032,
])

_jit = nb.njit(cache=True, fastmath=False, nogil=True)
_pjit = nb.njit(cache=True, fastmath=False, nogil=True, parallel=True)


@_jit
def _series(r):
    acc = 0.0
    for k in range(_SERIES.size - 1, -1, -1):
        acc = acc * r + _SERIES[k]
    return acc


@_jit
def neglog_delta1(sx, sy, zx, zy):
    """-log of the pixel-pair likelihood for SLC pixels x and y.

    ``s`` is |u1|^2 + |u2|^2 and ``z`` the interferogram value of a pixel.
    Returns +inf when an amplitude product vanishes, which includes the
    undefined all-zero case; callers that must reject it check beforehand.
    """
    a = (sx + sy) ** 2
    b = abs(zx) * abs(zy)
    if a == 0.0 or b == 0.0:
        return math.inf
    dz = zx + zy
    r = 4.0 * (dz.real * dz.real + dz.imag * dz.imag) / a
    q = 1.0 - r
    if r < EPS_RATIO:
        r = EPS_RATIO
    elif q < EPS_RATIO:
        # carry 1 - r exactly; rounding 1 - 1e-12 would perturb it by ~1e-4
        r = 1.0 - EPS_RATIO
        q = EPS_RATIO
    if r < SERIES_CUTOFF:
        # (B/C)^1.5 * sqrt(r)^3 * P(r) = (B/A)^1.5 * P(r)
        return -1.5 * math.log(b / a) - math.log(_series(r))
    c = r * a
    sr = math.sqrt(r)
    bracket = (1.0 + r) * sr / math.sqrt(q) - math.asin(sr)
    return -1.5 * math.log(b / c) - math.log(bracket)


@_jit
def kl_pixel(ix, gx, px, iy, gy, py):
    """Symmetric KL divergence between two single pixels' Gaussian models."""
    cos_d = math.cos(px - py)
    t1 = (ix / iy) * (1.0 - gx * gy * cos_d) / (1.0 - gy * gy)
    t2 = (iy / ix) * (1.0 - gy * gx * cos_d) / (1.0 - gx * gx)
    return 4.0 / math.pi * (t1 + t2 - 2.0)


@_jit
def _clip_range(x, d, half, n):
    # offsets o in [-half, half] with 0 <= x+o < n and 0 <= x+d+o < n
    lo = max(-half, -x, -x - d)
    hi = min(half, n - 1 - x, n - 1 - x - d)
    return lo, hi


@_pjit
def box_sum(img, half, out):
    """Clipped (2*half+1)^2 box sum: out[x] = sum of img[x+o] inside the raster."""
    h, w = img.shape
    tmp = np.zeros((h, w))
    for r_ in nb.prange(h):
        r = np.int64(r_)
        row = img[r]
        t = tmp[r]
        for oc in range(-half, half + 1):
            c0 = max(0, -oc)
            c1 = min(w, w - oc)
            src = row[c0 + oc:c1 + oc]
            dst = t[c0:c1]
            for c in range(c1 - c0):
                dst[c] += src[c]
    for r_ in nb.prange(h):
        r = np.int64(r_)
        o = out[r]
        for c in range(w):
            o[c] = 0.0
        for orr in range(-half, half + 1):
            rr = r + orr
            if rr < 0 or rr >= h:
                continue
            src = tmp[rr]
            for c in range(w):
                o[c] += src[c]


@_pjit
def stage1_pixel_terms(s, z, dr, dc, out):
    """out[p] = -log delta1(p, p+d) where both pixels exist, else 0."""
    h, w = s.shape
    for r_ in nb.prange(h):
        r = np.int64(r_)
        o = out[r]
        rr = r + dr
        for c in range(w):
            o[c] = 0.0
        if rr < 0 or rr >= h:
            continue
        for c in range(max(0, -dc), min(w, w - dc)):
            o[c] = neglog_delta1(s[r, c], s[rr, c + dc], z[r, c], z[rr, c + dc])


@_pjit
def stage1_pixel_terms_comp(s, z, dr, dc, f_r, f_az, out):
    """Like stage1_pixel_terms with the fringe removed from the partner.

    z[p+d] is rotated by exp(-j d.f) with f averaged over p and p+d, which
    keeps the term symmetric under swapping the two pixels.
    """
    h, w = s.shape
    for r_ in nb.prange(h):
        r = np.int64(r_)
        o = out[r]
        rr = r + dr
        for c in range(w):
            o[c] = 0.0
        if rr < 0 or rr >= h:
            continue
        for c in range(max(0, -dc), min(w, w - dc)):
            cc = c + dc
            th = 0.5 * (dr * (f_az[r, c] + f_az[rr, cc]) + dc * (f_r[r, c] + f_r[rr, cc]))
            zy = z[rr, cc] * complex(math.cos(th), -math.sin(th))
            o[c] = neglog_delta1(s[r, c], s[rr, cc], z[r, c], zy)


@_pjit
def shift_terms(src, dr, dc, out):
    """out[p] = src[p + d] where p + d is inside, else 0."""
    h, w = src.shape
    for r_ in nb.prange(h):
        r = np.int64(r_)
        o = out[r]
        for c in range(w):
            o[c] = 0.0
        rr = r + dr
        if rr < 0 or rr >= h:
            continue
        c0 = max(0, -dc)
        c1 = min(w, w - dc)
        s = src[rr, c0 + dc:c1 + dc]
        t = o[c0:c1]
        for c in range(c1 - c0):
            t[c] = s[c]


@_pjit
def finish_stage1_dissim(sums, dr, dc, patch_half, out):
    """Rescale clipped patch sums to a full patch and mark missing partners."""
    h, w = sums.shape
    full = float((2 * patch_half + 1) ** 2)
    for r_ in nb.prange(h):
        r = np.int64(r_)
        _finish_stage1_row(sums, out, r, dr, dc, patch_half, h, w, full)


@_jit
def _finish_stage1_row(sums, out, r, dr, dc, patch_half, h, w, full):
    rlo, rhi = _clip_range(r, dr, patch_half, h)
    row_ok = 0 <= r + dr < h
    for c in range(w):
        if row_ok and 0 <= c + dc < w:
            clo, chi = _clip_range(c, dc, patch_half, w)
            n = (rhi - rlo + 1) * (chi - clo + 1)
            out[r, c] = sums[r, c] * (full / n)
        else:
            out[r, c] = math.inf


@_pjit
def weights_inplace(dissim, scale, self_index):
    """Turn a (n_offsets, H, W) dissimilarity stack into normalised weights.

    w = exp(-(D - min D) / scale) per centre, normalised over offsets. A
    centre without any finite dissimilarity keeps only itself. Returns the
    equivalent number of looks per centre.
    """
    nd, h, w = dissim.shape
    enl = np.empty((h, w))
    for r_ in nb.prange(h):
        r = np.int64(r_)
        lo = np.full(w, math.inf)
        for d in range(nd):
            row = dissim[d, r]
            for c in range(w):
                if row[c] < lo[c]:
                    lo[c] = row[c]
        total = np.zeros(w)
        sc = scale[r]
        for d in range(nd):
            row = dissim[d, r]
            for c in range(w):
                if math.isinf(lo[c]):
                    v = 1.0 if d == self_index else 0.0
                else:
                    v = math.exp(-(row[c] - lo[c]) / sc[c])
                row[c] = v
                total[c] += v
        sq = np.zeros(w)
        for d in range(nd):
            row = dissim[d, r]
            for c in range(w):
                if total[c] > 0.0:
                    row[c] /= total[c]
                sq[c] += row[c] * row[c]
        for c in range(w):
            enl[r, c] = 1.0 / sq[c] if sq[c] > 0.0 else 1.0
    return enl


@_pjit
def accumulate_shifted(k, dr, dc, z, i1, i2, rot_r, rot_az, acc_z, acc_p1, acc_p2, norm):
    """Add k[p] * value[p + d] for every p whose partner p + d exists.

    When rotator tables are given (non-empty), z[p+d] is multiplied by
    conj(rot_r[dc] * rot_az[dr]) at p, which removes the local fringe.
    """
    h, w = k.shape
    comp = rot_r.shape[0] > 0
    half = (rot_r.shape[0] - 1) // 2
    for r_ in nb.prange(h):
        r = np.int64(r_)
        rr = r + dr
        if rr < 0 or rr >= h:
            continue
        c0 = max(0, -dc)
        c1 = min(w, w - dc)
        kr = k[r, c0:c1]
        zr = z[rr, c0 + dc:c1 + dc]
        a1 = i1[rr, c0 + dc:c1 + dc]
        a2 = i2[rr, c0 + dc:c1 + dc]
        oz = acc_z[r, c0:c1]
        o1 = acc_p1[r, c0:c1]
        o2 = acc_p2[r, c0:c1]
        on = norm[r, c0:c1]
        if comp:
            er = rot_r[dc + half, r, c0:c1]
            ea = rot_az[dr + half, r, c0:c1]
            for c in range(c1 - c0):
                rot = er[c] * ea[c]
                oz[c] += kr[c] * (zr[c] * rot.conjugate())
                o1[c] += kr[c] * a1[c]
                o2[c] += kr[c] * a2[c]
                on[c] += kr[c]
        else:
            for c in range(c1 - c0):
                oz[c] += kr[c] * zr[c]
                o1[c] += kr[c] * a1[c]
                o2[c] += kr[c] * a2[c]
                on[c] += kr[c]


@_pjit
def gauss_profile(sigma, half):
    """E[k, x] = exp(-k^2 / (2 sigma_x^2)), k = 0..half."""
    h, w = sigma.shape
    out = np.empty((half + 1, h, w))
    for r_ in nb.prange(h):
        r = np.int64(r_)
        for c in range(w):
            inv = 1.0 / (2.0 * sigma[r, c] ** 2)
            for k in range(half + 1):
                out[k, r, c] = math.exp(-k * k * inv)
    return out


@_pjit
def gauss_products(prof):
    """G[k, l, x] = E[k, x] * E[l, x]."""
    n, h, w = prof.shape
    out = np.empty((n, n, h, w))
    for r_ in nb.prange(h):
        r = np.int64(r_)
        for k in range(n):
            for l in range(n):
                a = prof[k, r]
                b = prof[l, r]
                o = out[k, l, r]
                for c in range(w):
                    o[c] = a[c] * b[c]
    return out


@_pjit
def window_gauss_sum(g, img, half, out):
    """out[x] = sum_o g[|o_r|, |o_c|, x + o] * img[x + o] over in-raster x + o.

    ``g`` is evaluated at the summed pixel, which is the aggregation form;
    pass ``img`` premultiplied appropriately for other uses.
    """
    h, w = img.shape
    for r_ in nb.prange(h):
        r = np.int64(r_)
        o = out[r]
        for c in range(w):
            o[c] = 0.0
        for orr in range(-half, half + 1):
            rr = r + orr
            if rr < 0 or rr >= h:
                continue
            src = img[rr]
            for oc in range(-half, half + 1):
                c0 = max(0, -oc)
                c1 = min(w, w - oc)
                gg = g[abs(orr), abs(oc), rr, c0 + oc:c1 + oc]
                s = src[c0 + oc:c1 + oc]
                t = o[c0:c1]
                for c in range(c1 - c0):
                    t[c] += gg[c] * s[c]


@_pjit
def pair_sums(img, half, out):
    """out[l, r, c] = img[r, c - l] + img[r, c + l] (in-raster terms only); out[0] = img."""
    h, w = img.shape
    for r_ in nb.prange(h):
        r = np.int64(r_)
        src = img[r]
        o0 = out[0, r]
        for c in range(w):
            o0[c] = src[c]
        for l in range(1, half + 1):
            o = out[l, r]
            for c in range(w):
                o[c] = 0.0
            n = max(w - l, 0)
            lo = o[l:l + n]
            hi = o[0:n]
            s_lo = src[0:n]
            s_hi = src[l:l + n]
            for c in range(n):
                lo[c] += s_lo[c]
            for c in range(n):
                hi[c] += s_hi[c]


@_pjit
def center_gauss_sum3(g, pa, pre, pim, half, out_a, out_re, out_im):
    """Three sums of img[x + o] weighted by the window of the centre x.

    Takes the horizontal pair sums of each image (see :func:`pair_sums`);
    the window factorises as g[k, l, x] over |o_r| = k, |o_c| = l.
    """
    n, h, w = pa.shape
    for r_ in nb.prange(h):
        r = np.int64(r_)
        oa = out_a[r]
        ore = out_re[r]
        oim = out_im[r]
        for c in range(w):
            oa[c] = 0.0
            ore[c] = 0.0
            oim[c] = 0.0
        for k in range(half + 1):
            for sgn in (1, -1):
                if k == 0 and sgn == -1:
                    continue
                rr = r + sgn * k
                if rr < 0 or rr >= h:
                    continue
                for l in range(half + 1):
                    gg = g[k, l, r]
                    sa = pa[l, rr]
                    sre = pre[l, rr]
                    sim = pim[l, rr]
                    for c in range(w):
                        oa[c] += gg[c] * sa[c]
                        ore[c] += gg[c] * sre[c]
                        oim[c] += gg[c] * sim[c]


@_pjit
def stage2_pixel_terms(inten, inv_var, cplx, dr, dc, out_a, out_re, out_im):
    """Per-pixel pieces of the KL divergence between p and p + d.

    With s = 1 / (I (1 - gamma^2)) and c = gamma e^{j phi}:
    a = I_p s_q + I_q s_p and the phase-dependent part is a c_p conj(c_q).
    """
    h, w = inten.shape
    for r_ in nb.prange(h):
        r = np.int64(r_)
        oa = out_a[r]
        ore = out_re[r]
        oim = out_im[r]
        for c in range(w):
            oa[c] = 0.0
            ore[c] = 0.0
            oim[c] = 0.0
        rr = r + dr
        if rr < 0 or rr >= h:
            continue
        c0 = max(0, -dc)
        c1 = min(w, w - dc)
        ip = inten[r, c0:c1]
        iq = inten[rr, c0 + dc:c1 + dc]
        sp = inv_var[r, c0:c1]
        sq = inv_var[rr, c0 + dc:c1 + dc]
        cp = cplx[r, c0:c1]
        cq = cplx[rr, c0 + dc:c1 + dc]
        ta = oa[c0:c1]
        tre = ore[c0:c1]
        tim = oim[c0:c1]
        for c in range(c1 - c0):
            av = ip[c] * sq[c] + iq[c] * sp[c]
            pc = av * (cp[c] * cq[c].conjugate())
            ta[c] = av
            tre[c] = pc.real
            tim[c] = pc.imag


@_pjit
def line_sums(prof):
    """sum_{k=-n..n} E[|k|, x] per pixel, the unclipped 1-D window mass."""
    n1, h, w = prof.shape
    out = np.empty((h, w))
    for r_ in nb.prange(h):
        r = np.int64(r_)
        o = out[r]
        for c in range(w):
            o[c] = prof[0, r, c]
        for k in range(1, n1):
            p = prof[k, r]
            for c in range(w):
                o[c] += 2.0 * p[c]
    return out


@_pjit
def finish_stage2_dissim(sa, sre, sim, prof, full, dr, dc, patch_half, rot_r, rot_az, out):
    """Normalise Gaussian-window sums into the patch divergence.

    D = 4/pi * ((S_a - Re(e^{j theta} S_c)) / S_g - 2), theta = d . f_x,
    clamped at zero; +inf where x + d falls outside the raster. ``full`` is
    the unclipped 1-D window mass from :func:`line_sums`.
    """
    h, w = sa.shape
    comp = rot_r.shape[0] > 0
    half = (rot_r.shape[0] - 1) // 2
    for r_ in nb.prange(h):
        r = np.int64(r_)
        _finish_stage2_row(sa, sre, sim, prof, full, r, dr, dc, patch_half, rot_r, rot_az, comp, half, out)


@_jit
def _finish_stage2_row(sa, sre, sim, prof, full, r, dr, dc, patch_half, rot_r, rot_az, comp, half, out):
    h, w = sa.shape
    rlo, rhi = _clip_range(r, dr, patch_half, h)
    row_ok = 0 <= r + dr < h
    row_full = rlo == -patch_half and rhi == patch_half
    for c in range(w):
        if row_ok and 0 <= c + dc < w:
            clo, chi = _clip_range(c, dc, patch_half, w)
            if row_full:
                gr = full[r, c]
            else:
                gr = 0.0
                for o in range(rlo, rhi + 1):
                    gr += prof[abs(o), r, c]
            if clo == -patch_half and chi == patch_half:
                gc = full[r, c]
            else:
                gc = 0.0
                for o in range(clo, chi + 1):
                    gc += prof[abs(o), r, c]
            if comp:
                rot = rot_r[dc + half, r, c] * rot_az[dr + half, r, c]
                proj = rot.real * sre[r, c] - rot.imag * sim[r, c]
            else:
                proj = sre[r, c]
            v = 4.0 / math.pi * ((sa[r, c] - proj) / (gr * gc) - 2.0)
            out[r, c] = v if v > 0.0 else 0.0
        else:
            out[r, c] = math.inf


@_pjit
def unwrap_moments(weights, offsets, phase, ref, i1, i2):
    """Weighted moments of locally unwrapped phase and of speckle powers.

    Returns mean and second moment of wrap(phase[x+d] - ref[x]) and the
    weighted sums of i1*i2, i1^2, i2^2, all over the search window of x.
    """
    nd, h, w = weights.shape
    m1 = np.zeros((h, w))
    m2 = np.zeros((h, w))
    p12 = np.zeros((h, w))
    p11 = np.zeros((h, w))
    p22 = np.zeros((h, w))
    two_pi = 2.0 * math.pi
    for r_ in nb.prange(h):
        r = np.int64(r_)
        for d in range(nd):
            dr = offsets[d, 0]
            dc = offsets[d, 1]
            rr = r + dr
            if rr < 0 or rr >= h:
                continue
            c0 = max(0, -dc)
            c1 = min(w, w - dc)
            wt = weights[d, r, c0:c1]
            ph = phase[rr, c0 + dc:c1 + dc]
            rf = ref[r, c0:c1]
            a1 = i1[rr, c0 + dc:c1 + dc]
            a2 = i2[rr, c0 + dc:c1 + dc]
            o1 = m1[r, c0:c1]
            o2 = m2[r, c0:c1]
            q12 = p12[r, c0:c1]
            q11 = p11[r, c0:c1]
            q22 = p22[r, c0:c1]
            for c in range(c1 - c0):
                v = ph[c] - rf[c]
                v = v - two_pi * math.ceil((v - math.pi) / two_pi)
                o1[c] += wt[c] * v
                o2[c] += wt[c] * v * v
                q12[c] += wt[c] * a1[c] * a2[c]
                q11[c] += wt[c] * a1[c] * a1[c]
                q22[c] += wt[c] * a2[c] * a2[c]
    return m1, m2, p12, p11, p22
