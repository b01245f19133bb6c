"""Matrix-free linear operators with verified adjoints.

All image-shaped vectors are flattened column-major (row index fastest),
i.e. ``img.ravel(order="F")``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import LinearOperator

__all__ = [
    "Operator",
    "DenseOperator",
    "DiagonalOperator",
    "BlurOperator",
    "TomoOperator",
    "ComposedOperator",
    "apply",
    "apply_adjoint",
    "adjoint_consistency_check",
    "make_gaussian_blur",
    "gaussian_psf",
    "make_parallel_beam",
    "siddon_ray",
    "MAX_DENSE_UNKNOWNS",
]

MAX_DENSE_UNKNOWNS = 4096


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class Operator:
    """Base class for a linear map ``R^cols -> R^rows``.

    Subclasses implement ``_matvec`` and ``_rmatvec``; the public
    :meth:`apply` / :meth:`apply_adjoint` validate lengths. Instances are
    immutable after construction.
    """

    kind = "abstract"

    def __init__(self, rows: int, cols: int):
        if rows < 1 or cols < 1:
            raise ValueError(f"operator dimensions must be positive, got {rows}x{cols}")
        object.__setattr__(self, "rows", int(rows))
        object.__setattr__(self, "cols", int(cols))

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def _set(self, name, value):
        object.__setattr__(self, name, value)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.cols:
            raise ValueError(
                f"apply: expected vector of length {self.cols}, got shape {x.shape}"
            )
        return self._matvec(x)

    def apply_adjoint(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.shape[0] != self.rows:
            raise ValueError(
                f"apply_adjoint: expected vector of length {self.rows}, got shape {y.shape}"
            )
        return self._rmatvec(y)

    def _matvec(self, x):
        raise NotImplementedError

    def _rmatvec(self, y):
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        """Assemble the operator column by column (small problems only)."""
        if self.cols > MAX_DENSE_UNKNOWNS:
            raise ValueError(
                f"dense assembly limited to {MAX_DENSE_UNKNOWNS} unknowns, got {self.cols}"
            )
        out = np.empty((self.rows, self.cols))
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            out[:, j] = self._matvec(e)
            e[j] = 0.0
        return out

    def aslinearoperator(self) -> LinearOperator:
        return LinearOperator(
            self.shape, matvec=self.apply, rmatvec=self.apply_adjoint, dtype=float
        )

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return ComposedOperator(self, other)
        return self.apply(other)

    def __repr__(self):
        return f"{type(self).__name__}({self.rows}x{self.cols})"


class DenseOperator(Operator):
    kind = "dense"

    def __init__(self, matrix, adjoint=None):
        matrix = _frozen(np.atleast_2d(matrix))
        super().__init__(*matrix.shape)
        self._set("matrix", matrix)
        # a deliberately different adjoint is only useful for negative tests
        if adjoint is None:
            adj = matrix.T
        else:
            adj = _frozen(np.atleast_2d(adjoint))
            if adj.shape != (self.cols, self.rows):
                raise ValueError(
                    f"adjoint must have shape {(self.cols, self.rows)}, got {adj.shape}"
                )
        self._set("_adjoint", adj)

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, y):
        return self._adjoint @ y

    def to_dense(self):
        return np.array(self.matrix)


class DiagonalOperator(Operator):
    kind = "diagonal"

    def __init__(self, diag):
        diag = _frozen(np.ravel(diag))
        super().__init__(diag.size, diag.size)
        self._set("diag", diag)

    def _matvec(self, x):
        return self.diag * x

    _rmatvec = _matvec

    def to_dense(self):
        return np.diag(self.diag)


class ComposedOperator(Operator):
    """Product ``outer @ inner``."""

    kind = "composed"

    def __init__(self, outer: Operator, inner: Operator):
        if outer.cols != inner.rows:
            raise ValueError(
                f"cannot compose {outer.shape} with {inner.shape}: inner dimensions differ"
            )
        super().__init__(outer.rows, inner.cols)
        self._set("outer", outer)
        self._set("inner", inner)

    def _matvec(self, x):
        return self.outer._matvec(self.inner._matvec(x))

    def _rmatvec(self, y):
        return self.inner._rmatvec(self.outer._rmatvec(y))


class BlurOperator(Operator):
    """2-D convolution of a ``side x side`` image with a centred PSF, zero boundary."""

    kind = "blur"

    def __init__(self, side: int, psf):
        psf = _frozen(np.atleast_2d(psf))
        if side < 1:
            raise ValueError(f"side must be >= 1, got {side}")
        if psf.shape[0] % 2 == 0 or psf.shape[1] % 2 == 0:
            raise ValueError(f"PSF must have odd dimensions, got {psf.shape}")
        super().__init__(side * side, side * side)
        self._set("side", int(side))
        self._set("psf", psf)

    def _matvec(self, x):
        img = x.reshape(self.side, self.side, order="F")
        out = ndimage.convolve(img, self.psf, mode="constant", cval=0.0)
        return out.ravel(order="F")

    def _rmatvec(self, y):
        img = y.reshape(self.side, self.side, order="F")
        out = ndimage.correlate(img, self.psf, mode="constant", cval=0.0)
        return out.ravel(order="F")


def gaussian_psf(sigma: float, halfwidth: int) -> np.ndarray:
    """Truncated Gaussian kernel of size ``2*halfwidth+1`` normalised to unit sum."""
    if not sigma > 0:
        raise ValueError(f"psf sigma must be positive, got {sigma}")
    if halfwidth < 0:
        raise ValueError(f"psf halfwidth must be >= 0, got {halfwidth}")
    i = np.arange(-halfwidth, halfwidth + 1)
    k = np.exp(-(i[:, None] ** 2 + i[None, :] ** 2) / (2.0 * sigma**2))
    return k / k.sum()


def make_gaussian_blur(
    side: int, psf_sigma: float, psf_halfwidth: int, boundary: str = "zero"
) -> BlurOperator:
    if boundary != "zero":
        raise ValueError(f"unsupported boundary rule {boundary!r}; only 'zero' is available")
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    if psf_halfwidth >= side:
        raise ValueError(f"psf_halfwidth ({psf_halfwidth}) must be smaller than side ({side})")
    return BlurOperator(side, gaussian_psf(psf_sigma, psf_halfwidth))


def siddon_ray(grid_n: int, point, direction):
    """Cells crossed by the line ``point + s*direction`` and the chord lengths.

    The grid has unit cells covering ``[-grid_n/2, grid_n/2]^2``; cell
    ``(i, j)`` has row ``i`` counted from the top (largest y). Returns the
    flat column-major cell indices and the matching lengths.
    """
    n = grid_n
    half = n / 2.0
    px, py = float(point[0]), float(point[1])
    dx, dy = np.asarray(direction, dtype=float) / np.hypot(*direction)

    s_lo, s_hi = -np.inf, np.inf
    for p, d in ((px, dx), (py, dy)):
        if abs(d) < 1e-15:
            if p < -half or p > half:
                return np.empty(0, dtype=int), np.empty(0)
            continue
        a, b = (-half - p) / d, (half - p) / d
        s_lo, s_hi = max(s_lo, min(a, b)), min(s_hi, max(a, b))
    if not s_hi > s_lo:
        return np.empty(0, dtype=int), np.empty(0)

    planes = np.arange(n + 1) - half
    crossings = [np.array([s_lo, s_hi])]
    for p, d in ((px, dx), (py, dy)):
        if abs(d) >= 1e-15:
            s = (planes - p) / d
            crossings.append(s[(s > s_lo) & (s < s_hi)])
    s = np.unique(np.concatenate(crossings))
    lengths = np.diff(s)
    mid = 0.5 * (s[:-1] + s[1:])
    keep = lengths > 1e-14
    lengths, mid = lengths[keep], mid[keep]
    col = np.clip(np.floor(px + mid * dx + half).astype(int), 0, n - 1)
    row = n - 1 - np.clip(np.floor(py + mid * dy + half).astype(int), 0, n - 1)
    return row + col * n, lengths


class TomoOperator(Operator):
    """Parallel-beam projector holding ray/cell intersection lengths.

    Row ``r + a*n_rays`` is ray ``r`` at angle ``a``; angles are uniform in
    ``[0, pi)`` and the detector spans the circumscribed diameter of the grid.
    """

    kind = "tomo"

    def __init__(self, grid_n: int, n_angles: int, n_rays: int):
        for name, val in (("grid_n", grid_n), ("n_angles", n_angles), ("n_rays", n_rays)):
            if int(val) < 1:
                raise ValueError(f"{name} must be >= 1, got {val}")
        super().__init__(n_rays * n_angles, grid_n * grid_n)
        self._set("grid_n", int(grid_n))
        self._set("n_angles", int(n_angles))
        self._set("n_rays", int(n_rays))
        self._set("angles", _frozen(np.pi * np.arange(n_angles) / n_angles))
        self._set("offsets", _frozen(self.ray_offsets(grid_n, n_rays)))

        rows, cols, vals = [], [], []
        for a, theta in enumerate(self.angles):
            d = (np.cos(theta), np.sin(theta))
            normal = (-np.sin(theta), np.cos(theta))
            for r, t in enumerate(self.offsets):
                idx, lengths = siddon_ray(grid_n, (t * normal[0], t * normal[1]), d)
                rows.append(np.full(idx.size, r + a * n_rays))
                cols.append(idx)
                vals.append(lengths)
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=self.shape,
        )
        mat.sum_duplicates()
        self._set("matrix", mat)
        self._set("_matrix_t", mat.T.tocsr())

    @staticmethod
    def ray_offsets(grid_n: int, n_rays: int) -> np.ndarray:
        width = grid_n * np.sqrt(2.0)
        return -width / 2 + (np.arange(n_rays) + 0.5) * width / n_rays

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, y):
        return self._matrix_t @ y

    def to_dense(self):
        if self.cols > MAX_DENSE_UNKNOWNS:
            return super().to_dense()
        return self.matrix.toarray()


def make_parallel_beam(grid_n: int, n_angles: int, n_rays: int) -> TomoOperator:
    return TomoOperator(grid_n, n_angles, n_rays)


def apply(op: Operator, x) -> np.ndarray:
    return op.apply(x)


def apply_adjoint(op: Operator, y) -> np.ndarray:
    return op.apply_adjoint(y)


def adjoint_consistency_check(op: Operator, trials: int = 20, seed: int = 0) -> float:
    """Largest ``|<Ax, y> - <x, A^T y>| / (|x| |y|)`` over seeded Gaussian pairs."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.cols)
        y = rng.standard_normal(op.rows)
        gap = abs(op.apply(x) @ y - x @ op.apply_adjoint(y))
        worst = max(worst, gap / (np.linalg.norm(x) * np.linalg.norm(y)))
    return worst
