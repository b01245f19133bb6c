"""Deblurring and tomography test problems with salt-and-pepper noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import Operator, make_gaussian_blur, make_parallel_beam

__all__ = [
    "Problem",
    "add_salt_pepper",
    "make_deblur_problem",
    "make_tomo_problem",
    "relative_error",
    "geometric_phantom",
    "shepp_logan",
]


@dataclass
class Problem:
    """Operator, data and (optionally) the ground truth.

    ``image_shape`` and ``data_shape`` describe how the flat column-major
    vectors fold into images (solution) and sinograms/images (data).
    """

    op: Operator
    b: np.ndarray
    x_true: np.ndarray | None = None
    r_true: np.ndarray | None = None
    noise_meta: dict = field(default_factory=dict)
    image_shape: tuple | None = None
    data_shape: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if not np.all(np.isfinite(self.b)):
            raise ValueError("data b has non-finite entries")
        if self.x_true is not None and self.r_true is None:
            self.r_true = self.b - self.op.apply(self.x_true)


def relative_error(x, x_true) -> float:
    x_true = np.asarray(x_true, dtype=float)
    nt = float(np.linalg.norm(x_true))
    if nt == 0.0:
        raise ValueError("relative error undefined for zero x_true")
    return float(np.linalg.norm(np.asarray(x, dtype=float) - x_true)) / nt


def add_salt_pepper(b_clean, fraction: float, seed: int, return_positions: bool = False):
    """Set exactly ``round(fraction*m)`` distinct entries to 0 or 1 (equal odds).

    ``b_clean`` is expected in ``[0, 1]``; callers normalize first.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {fraction}")
    b = np.array(b_clean, dtype=float, copy=True)
    m = b.size
    rng = np.random.default_rng(seed)
    count = int(np.rint(fraction * m))
    pos = np.sort(rng.choice(m, size=count, replace=False))
    b[pos] = rng.integers(0, 2, size=count).astype(float)
    if return_positions:
        return b, pos
    return b


def geometric_phantom(side: int) -> np.ndarray:
    """Dark background with a bright convex polygon, a bar and point sources."""
    c = (np.arange(side) + 0.5) / side
    yy, xx = np.meshgrid(c, c, indexing="ij")
    img = np.zeros((side, side))

    # convex pentagon, vertices counter-clockwise (x right, y down)
    ang = np.pi / 2 + 2 * np.pi * np.arange(5) / 5
    vx = 0.42 + 0.2 * np.cos(ang)
    vy = 0.45 - 0.2 * np.sin(ang)
    inside = np.ones_like(img, dtype=bool)
    for i in range(5):
        x1, y1, x2, y2 = vx[i], vy[i], vx[(i + 1) % 5], vy[(i + 1) % 5]
        inside &= (x2 - x1) * (yy - y1) - (y2 - y1) * (xx - x1) <= 0
    img[inside] = 0.6

    bar = (np.abs(xx - 0.42) < 0.32) & (np.abs(yy - 0.45) < 0.03)
    img[bar] = 0.8

    for fx, fy in ((0.8, 0.15), (0.15, 0.8), (0.78, 0.82), (0.2, 0.18)):
        img[min(int(fy * side), side - 1), min(int(fx * side), side - 1)] = 1.0
    return img


_SHEPP_LOGAN = (
    # value, semi-axis a, semi-axis b, x0, y0, angle (deg)
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def shepp_logan(n: int) -> np.ndarray:
    """Modified Shepp-Logan phantom sampled at pixel centres (row 0 on top)."""
    c = -1 + (2 * np.arange(n) + 1) / n
    x = c[None, :]
    y = -c[:, None]
    img = np.zeros((n, n))
    for val, a, b, x0, y0, deg in _SHEPP_LOGAN:
        t = np.deg2rad(deg)
        xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
        yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
        img += val * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return img


def _finish(op, img, fraction, seed, kind, image_shape, data_shape, params):
    x_true = np.asarray(img, dtype=float).ravel(order="F")
    clean = op.apply(x_true)
    peak = clean.max()
    if peak > 0:
        x_true = x_true / peak
        clean = clean / peak
    b, pos = add_salt_pepper(clean, fraction, seed, return_positions=True)
    collisions = int(np.sum(b[pos] == clean[pos]))
    meta = {
        "kind": "salt_pepper",
        "fraction": fraction,
        "seed": seed,
        "corrupted": int(pos.size),
        "collisions": collisions,
        "positions": pos,
    }
    return Problem(
        op=op,
        b=b,
        x_true=x_true,
        r_true=b - clean,
        noise_meta=meta,
        image_shape=image_shape,
        data_shape=data_shape,
        params=dict(params, problem=kind),
    )


def make_deblur_problem(
    side: int = 64,
    psf_sigma: float = 2.0,
    psf_halfwidth: int = 6,
    noise_fraction: float = 0.1,
    seed: int = 0,
    x_image=None,
) -> Problem:
    """Gaussian deblurring of a built-in phantom (or ``x_image``)."""
    op = make_gaussian_blur(side, psf_sigma, psf_halfwidth)
    img = geometric_phantom(side) if x_image is None else np.asarray(x_image, dtype=float)
    if img.shape != (side, side):
        raise ValueError(f"input image must be {side}x{side}, got {img.shape}")
    params = {"side": side, "psf_sigma": psf_sigma, "psf_halfwidth": psf_halfwidth}
    return _finish(op, img, noise_fraction, seed, "deblur", (side, side), (side, side), params)


def make_tomo_problem(
    grid_n: int = 32,
    n_angles: int = 30,
    n_rays: int = 45,
    noise_fraction: float = 0.1,
    seed: int = 0,
    x_image=None,
) -> Problem:
    """Parallel-beam tomography of a Shepp-Logan phantom (or ``x_image``)."""
    op = make_parallel_beam(grid_n, n_angles, n_rays)
    img = shepp_logan(grid_n) if x_image is None else np.asarray(x_image, dtype=float)
    if img.shape != (grid_n, grid_n):
        raise ValueError(f"input image must be {grid_n}x{grid_n}, got {img.shape}")
    params = {"grid_n": grid_n, "n_angles": n_angles, "n_rays": n_rays}
    return _finish(
        op, img, noise_fraction, seed, "tomo", (grid_n, grid_n), (n_rays, n_angles), params
    )
