"""
Dense two-frame optical flow via polynomial expansion.

Each frame neighborhood is modeled as a quadratic polynomial
``f(x) ~ x'Ax + b'x + c`` fit by weighted least squares under a Gaussian
applicability window. Displacement between two frames is recovered by
equating the expansion coefficients, solved coarse-to-fine over an image
pyramid with iterative warping refinement.

Coordinate convention: ``u`` is horizontal (column) displacement, ``v`` is
vertical (row) displacement, both in pixels per frame, such that
``prev(y, x) ~ next(y + v, x + u)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .frames import resize_bilinear

# Per-pixel 2x2 systems with determinant below this resolve to zero
# displacement (untextured regions).
SINGULAR_DET_EPS = 1e-9

_MIN_PYRAMID_DIM = 8


@dataclass(frozen=True)
class FarnebackParams:
    """Tuning knobs for the pyramidal polynomial-expansion flow."""

    pyr_scale: float = 0.5
    levels: int = 3
    winsize: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def validate(self) -> None:
        if not 0.0 < self.pyr_scale < 1.0:
            raise ValueError(f"pyr_scale must be in (0, 1), got {self.pyr_scale}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.winsize < 3 or self.winsize % 2 == 0:
            raise ValueError(f"winsize must be odd and >= 3, got {self.winsize}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.poly_n < 3 or self.poly_n % 2 == 0:
            raise ValueError(f"poly_n must be odd and >= 3, got {self.poly_n}")
        if self.poly_sigma <= 0.0:
            raise ValueError(f"poly_sigma must be > 0, got {self.poly_sigma}")


@dataclass
class PolyExpansion:
    """Per-pixel quadratic model coefficients.

    The symmetric 2x2 matrix A is stored as (a11, a12, a22); b is the
    gradient-like 2-vector (b1 along x, b2 along y); c is the constant term.
    All arrays share the frame shape.
    """

    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray


@dataclass
class FlowField:
    """Per-pixel displacement between two frames."""

    u: np.ndarray  # horizontal displacement (pixels/frame)
    v: np.ndarray  # vertical displacement (pixels/frame)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]


def poly_expand(frame: np.ndarray, poly_n: int, poly_sigma: float) -> PolyExpansion:
    """Fit the per-pixel quadratic model over a Gaussian window.

    The fit is a weighted least squares over a ``poly_n`` x ``poly_n``
    neighborhood with Gaussian weights of std ``poly_sigma``; borders use the
    same window with edge replication. Because the weights do not vary per
    pixel, the normal matrix is constant and the fit reduces to six separable
    correlations followed by a fixed 6x6 solve.
    """
    frame = np.asarray(frame, dtype=np.float64)
    radius = (poly_n - 1) // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(offsets**2) / (2.0 * poly_sigma**2))

    # Basis order: 1, x, y, x^2, y^2, xy  (x = column offset, y = row offset)
    xg, yg = np.meshgrid(offsets, offsets, indexing="xy")
    basis = np.stack(
        [np.ones_like(xg), xg, yg, xg**2, yg**2, xg * yg]
    ).reshape(6, -1)
    weights2d = np.outer(w, w).ravel()
    gram = (basis * weights2d) @ basis.T
    gram_inv = np.linalg.inv(gram)

    k0, k1, k2 = w, w * offsets, w * offsets**2

    def corr(kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
        tmp = ndimage.correlate1d(frame, kx, axis=1, mode="nearest")
        return ndimage.correlate1d(tmp, ky, axis=0, mode="nearest")

    # Weighted moment projections onto each basis function.
    proj = np.stack(
        [
            corr(k0, k0),  # 1
            corr(k1, k0),  # x
            corr(k0, k1),  # y
            corr(k2, k0),  # x^2
            corr(k0, k2),  # y^2
            corr(k1, k1),  # xy
        ]
    )
    r = np.einsum("ij,jhw->ihw", gram_inv, proj)
    return PolyExpansion(
        a11=r[3], a12=0.5 * r[5], a22=r[4], b1=r[1], b2=r[2], c=r[0]
    )


def pyramid_downsample(frame: np.ndarray, scale: float) -> np.ndarray:
    """Gaussian pre-smooth then bilinearly resample a frame by ``scale``.

    Smoothing std follows sigma = 0.6 * sqrt(1/scale^2 - 1); output
    dimensions are round(dim * scale) with a floor of 8 pixels.
    """
    if not 0.0 < scale < 1.0:
        raise ValueError(f"scale must be in (0, 1), got {scale}")
    frame = np.asarray(frame, dtype=np.float64)
    sigma = 0.6 * np.sqrt(1.0 / scale**2 - 1.0)
    blurred = ndimage.gaussian_filter(frame, sigma, mode="nearest")
    src_h, src_w = frame.shape
    out_w = max(_MIN_PYRAMID_DIM, int(round(src_w * scale)))
    out_h = max(_MIN_PYRAMID_DIM, int(round(src_h * scale)))
    return resize_bilinear(blurred, out_w, out_h)


def _warp_expansion(exp: PolyExpansion, u: np.ndarray, v: np.ndarray) -> PolyExpansion:
    """Sample expansion coefficients at displaced positions (border-clamped)."""
    h, w = u.shape
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    coords = np.stack(
        [np.clip(yy + v, 0.0, h - 1.0), np.clip(xx + u, 0.0, w - 1.0)]
    )

    def sample(field: np.ndarray) -> np.ndarray:
        return ndimage.map_coordinates(field, coords, order=1, mode="nearest")

    return PolyExpansion(
        a11=sample(exp.a11),
        a12=sample(exp.a12),
        a22=sample(exp.a22),
        b1=sample(exp.b1),
        b2=sample(exp.b2),
        c=sample(exp.c),
    )


def _flow_update(
    prev_exp: PolyExpansion,
    next_exp: PolyExpansion,
    u: np.ndarray,
    v: np.ndarray,
    winsize: int,
) -> tuple[np.ndarray, np.ndarray]:
    """One displacement solve given the current flow estimate.

    The next-frame expansion is warped by the current flow; the constraint
    A_avg * d = delta_b (with the warp compensation term A_avg * d0 folded
    into delta_b) is turned into per-pixel normal equations, box-averaged
    over winsize x winsize, and solved. Near-singular pixels get zero flow.
    """
    warped = _warp_expansion(next_exp, u, v)
    a11 = 0.5 * (prev_exp.a11 + warped.a11)
    a12 = 0.5 * (prev_exp.a12 + warped.a12)
    a22 = 0.5 * (prev_exp.a22 + warped.a22)
    db1 = -0.5 * (warped.b1 - prev_exp.b1) + a11 * u + a12 * v
    db2 = -0.5 * (warped.b2 - prev_exp.b2) + a12 * u + a22 * v

    # Normal equations of A d = db, accumulated over the averaging window.
    g11 = a11 * a11 + a12 * a12
    g12 = a12 * (a11 + a22)
    g22 = a12 * a12 + a22 * a22
    h1 = a11 * db1 + a12 * db2
    h2 = a12 * db1 + a22 * db2

    box = lambda f: ndimage.uniform_filter(f, size=winsize, mode="nearest")
    g11, g12, g22 = box(g11), box(g12), box(g22)
    h1, h2 = box(h1), box(h2)

    det = g11 * g22 - g12 * g12
    ok = det >= SINGULAR_DET_EPS
    safe_det = np.where(ok, det, 1.0)
    new_u = np.where(ok, (g22 * h1 - g12 * h2) / safe_det, 0.0)
    new_v = np.where(ok, (g11 * h2 - g12 * h1) / safe_det, 0.0)
    return new_u, new_v


def farneback_flow(
    prev: np.ndarray, next: np.ndarray, params: FarnebackParams | None = None
) -> FlowField:
    """Estimate dense flow from ``prev`` to ``next`` coarse-to-fine."""
    if params is None:
        params = FarnebackParams()
    params.validate()
    prev = np.asarray(prev, dtype=np.float64)
    next = np.asarray(next, dtype=np.float64)
    if prev.shape != next.shape:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {next.shape}")

    pyramid = [(prev, next)]
    for _ in range(params.levels - 1):
        p, n = pyramid[-1]
        pyramid.append(
            (pyramid_downsample(p, params.pyr_scale), pyramid_downsample(n, params.pyr_scale))
        )

    u = v = None
    for level_prev, level_next in reversed(pyramid):
        h, w = level_prev.shape
        if u is None:
            u = np.zeros((h, w))
            v = np.zeros((h, w))
        else:
            u = resize_bilinear(u, w, h) / params.pyr_scale
            v = resize_bilinear(v, w, h) / params.pyr_scale
        prev_exp = poly_expand(level_prev, params.poly_n, params.poly_sigma)
        next_exp = poly_expand(level_next, params.poly_n, params.poly_sigma)
        for _ in range(params.iterations):
            u, v = _flow_update(prev_exp, next_exp, u, v, params.winsize)

    u = np.nan_to_num(u, nan=0.0, posinf=0.0, neginf=0.0)
    v = np.nan_to_num(v, nan=0.0, posinf=0.0, neginf=0.0)
    return FlowField(u=u, v=v)
