"""Dense optical flow via quadratic polynomial expansion.

Each frame is locally approximated as f(x) ~ x'Ax + b'x + c using a
Gaussian-weighted least-squares fit computed with separable correlations.
For a displacement d between frames, b2 = b1 - 2*A*d, so d is recovered
from the expansion coefficients; window-averaged normal equations make the
estimate robust, and a coarse-to-fine pyramid handles large motion.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class FarnebackParams:
    pyr_scale: float = 0.5
    levels: int = 3
    winsize: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1


@lru_cache(maxsize=8)
def _poly_kernels(n: int, sigma: float):
    """1-d moment kernels and the inverse Gram matrix of the basis
    (1, x, y, x^2, y^2, xy) under the separable Gaussian weight."""
    x = np.arange(-n, n + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    kernels = (g, x * g, (x * x) * g)

    # Gram entries are products of 1-d weighted moments.
    m = [float((g * x ** p).sum()) for p in range(5)]
    basis_moments = {
        # (x power, y power) per basis function product
        (0, 0): m[0] * m[0],
        (2, 0): m[2] * m[0], (0, 2): m[0] * m[2],
        (4, 0): m[4] * m[0], (0, 4): m[0] * m[4],
        (2, 2): m[2] * m[2],
    }
    powers = [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)]
    gram = np.zeros((6, 6))
    for i, (pi, qi) in enumerate(powers):
        for j, (pj, qj) in enumerate(powers):
            px, py = pi + pj, qi + qj
            if px % 2 or py % 2:
                continue  # odd moments vanish by symmetry
            gram[i, j] = basis_moments.get((px, py), m[px] * m[py])
    return kernels, np.linalg.inv(gram)


def poly_expansion(img: np.ndarray, n: int, sigma: float):
    """Per-pixel quadratic expansion coefficients (bx, by, axx, ayy, axy)."""
    (k0, k1, k2), ginv = _poly_kernels(n, sigma)
    img = img.astype(np.float64)

    def corr(kernel_y, kernel_x):
        tmp = ndimage.correlate1d(img, kernel_y, axis=0, mode="mirror")
        return ndimage.correlate1d(tmp, kernel_x, axis=1, mode="mirror")

    # Weighted moments of the image against each basis function.
    v = np.stack([
        corr(k0, k0),  # 1
        corr(k0, k1),  # x
        corr(k1, k0),  # y
        corr(k0, k2),  # x^2
        corr(k2, k0),  # y^2
        corr(k1, k1),  # xy
    ])
    coef = np.einsum("ij,jhw->ihw", ginv, v)
    bx, by = coef[1], coef[2]
    axx, ayy = coef[3], coef[4]
    axy = 0.5 * coef[5]
    return np.stack([bx, by, axx, ayy, axy])


def _sample_fields(fields: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup of stacked (K,H,W) fields at float coordinates."""
    _, h, w = fields.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    return (fields[:, y0, x0] * (1 - fy) * (1 - fx)
            + fields[:, y0, x1] * (1 - fy) * fx
            + fields[:, y1, x0] * fy * (1 - fx)
            + fields[:, y1, x1] * fy * fx)


def _refine(poly1: np.ndarray, poly2: np.ndarray, flow: np.ndarray,
            winsize: int) -> np.ndarray:
    """One displacement update given expansions of both frames."""
    h, w = poly1.shape[1:]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    p2 = _sample_fields(poly2, ys + flow[1], xs + flow[0])

    axx = 0.5 * (poly1[2] + p2[2])
    ayy = 0.5 * (poly1[3] + p2[3])
    axy = 0.5 * (poly1[4] + p2[4])
    dbx = 0.5 * (poly1[0] - p2[0]) + axx * flow[0] + axy * flow[1]
    dby = 0.5 * (poly1[1] - p2[1]) + axy * flow[0] + ayy * flow[1]

    g11 = axx * axx + axy * axy
    g12 = (axx + ayy) * axy
    g22 = ayy * ayy + axy * axy
    h1 = axx * dbx + axy * dby
    h2 = axy * dbx + ayy * dby

    blur = lambda f: ndimage.uniform_filter(f, size=winsize, mode="mirror")
    g11, g12, g22, h1, h2 = map(blur, (g11, g12, g22, h1, h2))

    det = g11 * g22 - g12 * g12
    safe = np.abs(det) > 1e-12
    det = np.where(safe, det, 1.0)
    u = np.where(safe, (g22 * h1 - g12 * h2) / det, flow[0])
    v = np.where(safe, (g11 * h2 - g12 * h1) / det, flow[1])
    return np.stack([u, v])


def _pyramid_level(img: np.ndarray, scale: float) -> np.ndarray:
    if scale >= 1.0:
        return img
    sigma = (1.0 / scale - 1.0) * 0.5
    smoothed = ndimage.gaussian_filter(img, sigma=sigma, mode="mirror")
    new_h = max(2, int(round(img.shape[0] * scale)))
    new_w = max(2, int(round(img.shape[1] * scale)))
    return _resize2d(smoothed, new_h, new_w)


def _resize2d(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    from .preprocess import _resize_axis

    return _resize_axis(_resize_axis(img, new_h, axis=0), new_w, axis=1)


def farneback_flow(prev: np.ndarray, nxt: np.ndarray,
                   params: FarnebackParams = FarnebackParams()) -> np.ndarray:
    """Dense flow from `prev` to `nxt`; returns (H, W, 2) with channels
    (u horizontal, v vertical) in pixels. Positive u means content moved
    rightward between the frames."""
    if prev.shape != nxt.shape:
        raise ValueError(f"frame dims differ: {prev.shape} vs {nxt.shape}")
    if prev.ndim != 2:
        raise ValueError("farneback_flow expects grayscale (H, W) frames")
    prev = prev.astype(np.float64)
    nxt = nxt.astype(np.float64)

    scales = [params.pyr_scale ** k for k in range(params.levels)]
    flow = None
    for scale in reversed(scales):  # coarsest first
        im1 = _pyramid_level(prev, scale)
        im2 = _pyramid_level(nxt, scale)
        h, w = im1.shape
        if flow is None:
            flow = np.zeros((2, h, w))
        else:
            grown = np.stack([_resize2d(flow[0], h, w), _resize2d(flow[1], h, w)])
            flow = grown / params.pyr_scale
        poly1 = poly_expansion(im1, params.poly_n, params.poly_sigma)
        poly2 = poly_expansion(im2, params.poly_n, params.poly_sigma)
        for _ in range(params.iterations):
            flow = _refine(poly1, poly2, flow, params.winsize)
    return np.ascontiguousarray(flow.transpose(1, 2, 0)).astype(np.float32)
