"""Frames and their balance diagnostics.

A frame is a spanning set of n column vectors in R^d, stored as a d x n
matrix.  The quantities computed here measure how far a frame is from being
simultaneously isotropic (V V^T proportional to the identity) and equal-norm,
which is the target condition of the scaling routines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Frame",
    "ErrorReport",
    "FrameError",
    "NonSpanningError",
    "DegenerateColumnError",
    "size",
    "error_report",
    "is_eps_doubly_balanced",
    "op_norm_symmetric",
    "save_matrix_text",
    "read_matrix_text",
    "load_frame",
]

# Scale-relative cutoff for the numerical rank test.
_SPANNING_RTOL = 1e-12
# Symmetry tolerance for op_norm_symmetric, relative to the Frobenius norm.
_SYMMETRY_RTOL = 1e-10
# Above this dimension the spectral norm falls back to power iteration.
_DENSE_EIG_MAX_DIM = 512
_POWER_TOL = 1e-12
_POWER_MAX_ITERS = 10_000


class FrameError(ValueError):
    """Invalid frame construction or degenerate frame input."""


class NonSpanningError(FrameError):
    """The columns do not span R^d."""


class DegenerateColumnError(FrameError):
    """A data column is zero where a direction is required."""

    def __init__(self, column, message=None):
        self.column = int(column)
        super().__init__(
            message or f"column {column} is zero and cannot be normalized"
        )


class Frame:
    """A d x n real matrix whose columns span R^d.

    Immutable after construction; the entry array is write-protected.
    Construction rejects non-finite entries and numerically rank-deficient
    matrices (smallest singular value below ``1e-12`` times the largest).
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        mat = np.array(entries, dtype=float)
        if mat.ndim != 2:
            raise FrameError(f"frame entries must be a 2-d matrix, got ndim={mat.ndim}")
        d, n = mat.shape
        if d < 1:
            raise FrameError("frame dimension d must be at least 1")
        if n < d:
            raise NonSpanningError(
                f"need at least d columns to span R^d, got d={d}, n={n}"
            )
        if not np.all(np.isfinite(mat)):
            raise FrameError("frame entries must all be finite")
        svals = np.linalg.svd(mat, compute_uv=False)
        if svals[0] == 0.0 or svals[-1] <= _SPANNING_RTOL * svals[0]:
            raise NonSpanningError(
                f"columns do not span R^{d}: smallest singular value "
                f"{svals[-1]:.3e} vs largest {svals[0]:.3e}"
            )
        mat.setflags(write=False)
        self._entries = mat

    @property
    def d(self) -> int:
        return self._entries.shape[0]

    @property
    def n(self) -> int:
        return self._entries.shape[1]

    @property
    def entries(self) -> np.ndarray:
        """Read-only d x n entry matrix."""
        return self._entries

    def scaled(self, c: float) -> "Frame":
        """Frame with every entry multiplied by the nonzero scalar c."""
        return Frame(self._entries * float(c))

    def __repr__(self):
        return f"Frame(d={self.d}, n={self.n})"


@dataclass(frozen=True)
class ErrorReport:
    """Balance defects of a frame.

    ``isotropy_error`` is the symmetric d x d matrix d * V V^T - s * I and
    ``norm_error`` holds the diagonal of n * V^T V - s * I as a length-n
    vector; both are traceless.  ``l2_error`` combines their mean squares,
    ``op_error`` is the larger of the two spectral norms.
    """

    size: float
    isotropy_error: np.ndarray
    norm_error: np.ndarray
    l2_error: float
    op_error: float

    def __post_init__(self):
        self.isotropy_error.setflags(write=False)
        self.norm_error.setflags(write=False)


def size(frame: Frame) -> float:
    """Squared Frobenius norm of the frame."""
    return float(np.sum(frame.entries * frame.entries))


def column_square_norms(entries: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->j", entries, entries)


def error_report(frame: Frame) -> ErrorReport:
    """Compute the isotropy and norm defects of a frame.

    The norm defect is derived from column norms alone; the n x n Gram
    matrix is never formed.
    """
    mat = frame.entries
    d, n = mat.shape
    col_sq = column_square_norms(mat)
    s = float(col_sq.sum())
    iso = d * (mat @ mat.T) - s * np.eye(d)
    iso = 0.5 * (iso + iso.T)
    norm_err = n * col_sq - s
    l2 = float(np.sum(iso * iso) / d + np.sum(norm_err * norm_err) / n)
    op = max(op_norm_symmetric(iso), float(np.max(np.abs(norm_err))))
    return ErrorReport(
        size=s,
        isotropy_error=iso,
        norm_error=norm_err,
        l2_error=l2,
        op_error=op,
    )


def is_eps_doubly_balanced(frame: Frame, eps: float) -> bool:
    """True when both balance defects are at most eps times the frame size."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    report = error_report(frame)
    return report.op_error <= report.size * eps


def op_norm_symmetric(mat) -> float:
    """Spectral norm (largest absolute eigenvalue) of a symmetric matrix.

    Uses a full symmetric eigendecomposition up to dimension 512 and power
    iteration above.  Rejects input whose asymmetry exceeds 1e-10 times its
    Frobenius norm.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix entries must be finite")
    fnorm = float(np.linalg.norm(mat))
    if fnorm == 0.0:
        return 0.0
    asym = float(np.linalg.norm(mat - mat.T))
    if asym > _SYMMETRY_RTOL * fnorm:
        raise ValueError(
            f"matrix is not symmetric: asymmetry {asym:.3e} exceeds "
            f"{_SYMMETRY_RTOL:.0e} * ||M||_F = {_SYMMETRY_RTOL * fnorm:.3e}"
        )
    m = mat.shape[0]
    if m <= _DENSE_EIG_MAX_DIM:
        return float(np.max(np.abs(np.linalg.eigvalsh(mat))))
    return _power_iteration_norm(mat)


def _power_iteration_norm(mat):
    m = mat.shape[0]
    vec = np.full(m, 1.0 / np.sqrt(m))
    # fixed deterministic perturbation so a symmetric start cannot sit
    # exactly orthogonal to the dominant eigenvector
    vec[0] += 0.5
    vec /= np.linalg.norm(vec)
    prev = 0.0
    est = 0.0
    for _ in range(_POWER_MAX_ITERS):
        nxt = mat @ vec
        est = float(np.linalg.norm(nxt))
        if est == 0.0:
            return 0.0
        vec = nxt / est
        if abs(est - prev) <= _POWER_TOL * max(est, 1.0):
            break
        prev = est
    return est


# ---------------------------------------------------------------------------
# Text format: first non-comment line is "d n" for frames or "data d n" for
# raw data matrices (spanning not required); then d rows of n floats.
# Lines starting with '#' are comments.  UTF-8.
# ---------------------------------------------------------------------------


def save_matrix_text(path, matrix, kind: str = "frame") -> None:
    """Write a matrix in the frame text format.

    ``kind`` is "frame" for spanning frames or "data" for raw data matrices.
    """
    if kind not in ("frame", "data"):
        raise ValueError(f"kind must be 'frame' or 'data', got {kind!r}")
    if isinstance(matrix, Frame):
        matrix = matrix.entries
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2:
        raise ValueError("matrix must be 2-d")
    d, n = mat.shape
    with open(path, "w", encoding="utf-8") as fh:
        if kind == "data":
            fh.write(f"data {d} {n}\n")
        else:
            fh.write(f"{d} {n}\n")
        for row in mat:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_matrix_text(path):
    """Read a matrix in the frame text format.

    Returns ``(matrix, kind)`` where kind is "frame" or "data".
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    content = [ln for ln in lines if ln and not ln.startswith("#")]
    if not content:
        raise FrameError(f"{path}: no header line found")
    header = content[0].split()
    if header and header[0] == "data":
        kind = "data"
        header = header[1:]
    else:
        kind = "frame"
    if len(header) != 2:
        raise FrameError(f"{path}: malformed header {content[0]!r}")
    try:
        d, n = int(header[0]), int(header[1])
    except ValueError as exc:
        raise FrameError(f"{path}: malformed header {content[0]!r}") from exc
    rows = content[1:]
    if len(rows) != d:
        raise FrameError(f"{path}: expected {d} rows, found {len(rows)}")
    mat = np.empty((d, n), dtype=float)
    for i, row in enumerate(rows):
        vals = row.split()
        if len(vals) != n:
            raise FrameError(f"{path}: row {i} has {len(vals)} values, expected {n}")
        mat[i] = [float(v) for v in vals]
    return mat, kind


def load_frame(path) -> Frame:
    """Read a frame from a text file (accepts both header variants)."""
    mat, _ = read_matrix_text(path)
    return Frame(mat)
