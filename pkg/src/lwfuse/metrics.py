"""Fusion-quality metrics: EN, MI, SF, AG, PSNR and SSIM.

Inputs are grayscale images with values in [0, 1], shaped (h, w) or
(1, h, w). Every metric first quantizes to 8-bit levels (round half away
from zero) and then works on the 0-255 scale, so all six scores of one
report see identical pixel values.

    EN    -sum p_i log2 p_i over the 256-bin histogram
    MI    MI(f, ir) + MI(f, vi) from 256 x 256 joint histograms
    SF    sqrt(RF^2 + CF^2), RF/CF = RMS of horizontal/vertical neighbour differences
    AG    mean over the (h-1) x (w-1) grid of sqrt((dx^2 + dy^2) / 2)
    PSNR  10 log10(255^2 / MSE), MSE averaged over both sources, capped at 100 dB
    SSIM  11x11 Gaussian window (sigma 1.5), valid positions only, averaged over both sources
"""

import csv
import io
from dataclasses import astuple, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, ShapeError

LEVELS = 256
PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2


def quantize(img):
    """Map [0, 1] reals to integer levels 0..255 (as int64)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 2:
        raise ShapeError(f"expected a grayscale image, got shape {img.shape}")
    return np.floor(np.clip(img, 0.0, 1.0) * 255 + 0.5).astype(np.int64)


def _levels(img):
    return quantize(img).astype(np.float64)


def _same_size(*imgs):
    shapes = {np.shape(quantize(i)) for i in imgs}
    if len(shapes) != 1:
        raise ShapeError(f"images differ in size: {sorted(shapes)}")


def _entropy_of_counts(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0  # + 0.0 turns -0.0 into 0.0


def entropy(img):
    return _entropy_of_counts(np.bincount(quantize(img).ravel(), minlength=LEVELS))


def mutual_information(a, b):
    qa, qb = quantize(a), quantize(b)
    if qa.shape != qb.shape:
        raise ShapeError(f"images differ in size: {qa.shape} vs {qb.shape}")
    joint = np.bincount((qa * LEVELS + qb).ravel(), minlength=LEVELS * LEVELS).reshape(LEVELS, LEVELS)
    pxy = joint / joint.sum()
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    ratio = pxy[nz] / np.outer(px, py)[nz]
    return float(max((pxy[nz] * np.log2(ratio)).sum(), 0.0))


def mi_fusion(f, ir, vi):
    return mutual_information(f, ir) + mutual_information(f, vi)


def _require_gradients(img):
    if min(img.shape) < 2:
        raise ArgumentError(f"gradient metrics need at least 2x2 pixels, got {img.shape}")


def spatial_frequency(img):
    q = _levels(img)
    _require_gradients(q)
    rf = np.sqrt(np.mean(np.diff(q, axis=1) ** 2))
    cf = np.sqrt(np.mean(np.diff(q, axis=0) ** 2))
    return float(np.sqrt(rf * rf + cf * cf))


def average_gradient(img):
    q = _levels(img)
    _require_gradients(q)
    dx = q[:-1, 1:] - q[:-1, :-1]
    dy = q[1:, :-1] - q[:-1, :-1]
    return float(np.mean(np.sqrt((dx * dx + dy * dy) / 2)))


def _mse(a, b):
    return float(np.mean((a - b) ** 2))


def psnr_fusion(f, ir, vi):
    _same_size(f, ir, vi)
    qf, qi, qv = _levels(f), _levels(ir), _levels(vi)
    mse = 0.5 * (_mse(qf, qi) + _mse(qf, qv))
    if mse < 255.0 ** 2 * 1e-10:
        return PSNR_CAP
    return float(min(10 * np.log10(255.0 ** 2 / mse), PSNR_CAP))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    # separable valid-region correlation: rows, then columns
    rows = sliding_window_view(img, len(g), axis=1) @ g
    return sliding_window_view(rows, len(g), axis=0) @ g


def ssim(a, b):
    qa, qb = _levels(a), _levels(b)
    if qa.shape != qb.shape:
        raise ShapeError(f"images differ in size: {qa.shape} vs {qb.shape}")
    if min(qa.shape) < SSIM_WINDOW:
        raise ArgumentError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {qa.shape}")
    g = gaussian_window()
    mu_a, mu_b = _filter_valid(qa, g), _filter_valid(qb, g)
    var_a = _filter_valid(qa * qa, g) - mu_a * mu_a
    var_b = _filter_valid(qb * qb, g) - mu_b * mu_b
    cov = _filter_valid(qa * qb, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return float(np.mean(num / den))


def ssim_fusion(f, ir, vi):
    return 0.5 * (ssim(f, ir) + ssim(f, vi))


@dataclass(frozen=True)
class MetricReport:
    en: float
    mi: float
    sf: float
    ag: float
    psnr: float
    ssim: float


METRIC_NAMES = tuple(f.name for f in fields(MetricReport))


def evaluate_all(f, ir, vi):
    _same_size(f, ir, vi)
    return MetricReport(
        en=entropy(f),
        mi=mi_fusion(f, ir, vi),
        sf=spatial_frequency(f),
        ag=average_gradient(f),
        psnr=psnr_fusion(f, ir, vi),
        ssim=ssim_fusion(f, ir, vi),
    )


def mean_report(reports):
    reports = list(reports)
    if not reports:
        raise ArgumentError("no reports to average")
    cols = np.array([astuple(r) for r in reports], dtype=np.float64)
    return MetricReport(*(float(v) for v in cols.mean(axis=0)))


def reports_to_csv(rows, with_mean=False):
    """CSV text with header ``name,en,mi,sf,ag,psnr,ssim``; ``rows`` are (name, report)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("name",) + METRIC_NAMES)
    for name, rep in rows:
        w.writerow([name] + [f"{v:.6f}" for v in astuple(rep)])
    if with_mean:
        w.writerow(["mean"] + [f"{v:.6f}" for v in astuple(mean_report(r for _, r in rows))])
    return buf.getvalue()
