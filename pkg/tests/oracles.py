"""Naive reference implementations, written with plain loops and no package code.

These are the independent side of every dual-route check: they never import
lwfuse, so a shared bug cannot make both sides agree.
"""

import math

import numpy as np


def conv2d_loops(x, kernel, bias=None, pad=None):
    c_out, c_in, k, _ = kernel.shape
    pad = (k - 1) // 2 if pad is None else pad
    _, h, w = x.shape
    ho, wo = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for y in range(ho):
            for xx in range(wo):
                s = 0.0 if bias is None else float(bias[o])
                for c in range(c_in):
                    for i in range(k):
                        for j in range(k):
                            yy, xi = y + i - pad, xx + j - pad
                            if 0 <= yy < h and 0 <= xi < w:
                                s += float(kernel[o, c, i, j]) * float(x[c, yy, xi])
                out[o, y, xx] = s
    return out


def _levels(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[0]
    h, w = img.shape
    return [[math.floor(min(max(img[y, x], 0.0), 1.0) * 255 + 0.5) for x in range(w)] for y in range(h)]


def entropy(img):
    q = _levels(img)
    counts = {}
    n = 0
    for row in q:
        for v in row:
            counts[v] = counts.get(v, 0) + 1
            n += 1
    return -sum(c / n * math.log2(c / n) for c in counts.values())


def mutual_information(a, b):
    qa, qb = _levels(a), _levels(b)
    joint, pa, pb, n = {}, {}, {}, 0
    for ra, rb in zip(qa, qb):
        for va, vb in zip(ra, rb):
            joint[(va, vb)] = joint.get((va, vb), 0) + 1
            pa[va] = pa.get(va, 0) + 1
            pb[vb] = pb.get(vb, 0) + 1
            n += 1
    return sum(c / n * math.log2((c / n) / ((pa[va] / n) * (pb[vb] / n))) for (va, vb), c in joint.items())


def spatial_frequency(img):
    q = _levels(img)
    h, w = len(q), len(q[0])
    rf = sum((q[y][x] - q[y][x - 1]) ** 2 for y in range(h) for x in range(1, w)) / (h * (w - 1))
    cf = sum((q[y][x] - q[y - 1][x]) ** 2 for y in range(1, h) for x in range(w)) / ((h - 1) * w)
    return math.sqrt(rf + cf)


def average_gradient(img):
    q = _levels(img)
    h, w = len(q), len(q[0])
    total = 0.0
    for y in range(h - 1):
        for x in range(w - 1):
            dx = q[y][x + 1] - q[y][x]
            dy = q[y + 1][x] - q[y][x]
            total += math.sqrt((dx * dx + dy * dy) / 2)
    return total / ((h - 1) * (w - 1))


def psnr(f, ir, vi):
    qf, qi, qv = _levels(f), _levels(ir), _levels(vi)
    n = len(qf) * len(qf[0])
    mse_i = sum((a - b) ** 2 for ra, rb in zip(qf, qi) for a, b in zip(ra, rb)) / n
    mse_v = sum((a - b) ** 2 for ra, rb in zip(qf, qv) for a, b in zip(ra, rb)) / n
    mse = (mse_i + mse_v) / 2
    if mse < 255 ** 2 * 1e-10:
        return 100.0
    return min(10 * math.log10(255 ** 2 / mse), 100.0)


def ssim(a, b, size=11, sigma=1.5):
    qa, qb = _levels(a), _levels(b)
    h, w = len(qa), len(qa[0])
    g1 = [math.exp(-((i - (size - 1) / 2) ** 2) / (2 * sigma * sigma)) for i in range(size)]
    total = sum(g1)
    win = [[g1[i] * g1[j] / (total * total) for j in range(size)] for i in range(size)]
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    scores = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            ma = mb = saa = sbb = sab = 0.0
            for i in range(size):
                for j in range(size):
                    va, vb, g = qa[y + i][x + j], qb[y + i][x + j], win[i][j]
                    ma += g * va
                    mb += g * vb
                    saa += g * va * va
                    sbb += g * vb * vb
                    sab += g * va * vb
            va_, vb_, cov = saa - ma * ma, sbb - mb * mb, sab - ma * mb
            scores.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va_ + vb_ + c2)))
    return sum(scores) / len(scores)


def evaluate(f, ir, vi):
    return {
        "en": entropy(f),
        "mi": mutual_information(f, ir) + mutual_information(f, vi),
        "sf": spatial_frequency(f),
        "ag": average_gradient(f),
        "psnr": psnr(f, ir, vi),
        "ssim": (ssim(f, ir) + ssim(f, vi)) / 2,
    }


def count_params_by_formula(plan, hidden_ratio=8, min_hidden=4):
    """Hand formulas: k^2 c_in c_out + c_out (conv), k^2 c_in + c_in c_out + c_out (dsconv)."""
    total = 0
    for _, role, c_in, c_out in plan:
        if role == "conv":
            total += 9 * c_in * c_out + c_out
        elif role == "dsconv":
            total += 9 * c_in + c_in * c_out + c_out
        else:
            hidden = max(c_in // hidden_ratio, min_hidden)
            total += 2 * c_in * hidden + 2 * 49 + 1
    return total
