"""Small dense linear-algebra kernels used throughout the package.

Everything here operates on plain float64 numpy arrays and is sized for
control-loop state dimensions (tens, not thousands), so clarity wins over
asymptotic cleverness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError, StabilityError

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "as_matrix",
    "symmetrize",
    "spectral_radius",
    "is_schur_stable",
    "solve_discrete_lyapunov",
    "controllability_matrix",
    "matrix_rank",
    "is_controllable",
    "spectrum_distance",
]


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds shared by rank, stability and fixpoint checks.

    rank_tol
        Relative singular-value (or entry-magnitude) cutoff.
    stability_margin
        A matrix counts as Schur stable when its spectral radius is below
        1 - stability_margin.
    fixpoint_tol
        Relative residual allowed when verifying fixed-point equations.
    """

    rank_tol: float = 1e-9
    stability_margin: float = 1e-9
    fixpoint_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rank_tol", "fixpoint_tol"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InputError(f"{name} must be finite and positive")
        margin = self.stability_margin
        if not np.isfinite(margin) or margin < 0 or margin >= 1:
            raise InputError("stability_margin must lie in [0, 1)")


DEFAULT_TOL = Tolerance()


def as_matrix(m, name: str, square: bool = False) -> np.ndarray:
    """Validate and return `m` as a finite 2-D float64 array."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name} must be nonempty, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _check_symmetric(m: np.ndarray, name: str, rel: float = 1e-8) -> np.ndarray:
    scale = 1.0 + np.abs(m).max()
    if np.abs(m - m.T).max() > rel * scale:
        raise InputError(f"{name} is asymmetric beyond round-off")
    return symmetrize(m)


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    arr = as_matrix(m, "matrix", square=True)
    return float(np.abs(np.linalg.eigvals(arr)).max())


def is_schur_stable(m, tol: Tolerance = DEFAULT_TOL) -> bool:
    """True when every eigenvalue modulus is below 1 - stability_margin."""
    return spectral_radius(m) < 1.0 - tol.stability_margin


def solve_discrete_lyapunov(a, q, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Solve sigma = a sigma a^T + q for a Schur-stable `a`.

    Uses the explicit vectorised form (I - a (x) a) vec(sigma) = vec(q),
    which is exact up to one dense solve and entirely adequate at the
    state dimensions this package handles.

    Raises StabilityError when `a` is not Schur stable and InputError when
    `q` is asymmetric beyond round-off.  The returned matrix is exactly
    symmetric and its fixpoint residual is verified against
    tol.fixpoint_tol before returning.
    """
    a = as_matrix(a, "a", square=True)
    q = as_matrix(q, "q", square=True)
    if a.shape != q.shape:
        raise DimensionError(
            f"a and q must have matching shapes, got {a.shape} and {q.shape}"
        )
    if not is_schur_stable(a, tol):
        raise StabilityError(
            f"fixpoint equation needs a Schur-stable matrix, got spectral "
            f"radius {spectral_radius(a):.6g}"
        )
    q = _check_symmetric(q, "q")
    n = a.shape[0]
    lhs = np.eye(n * n) - np.kron(a, a)
    sigma = np.linalg.solve(lhs, q.reshape(-1)).reshape(n, n)
    sigma = symmetrize(sigma)
    residual = np.linalg.norm(sigma - a @ sigma @ a.T - q)
    if residual > tol.fixpoint_tol * (1.0 + np.linalg.norm(sigma)):
        raise StabilityError(
            f"fixpoint residual {residual:.3g} exceeds tolerance; the "
            f"equation is too ill-conditioned at this size"
        )
    return sigma


def controllability_matrix(a, b) -> np.ndarray:
    """Horizontal stack [b, a b, ..., a^(p-1) b]."""
    a = as_matrix(a, "a", square=True)
    b = as_matrix(b, "b")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(
            f"b must have {a.shape[0]} rows to match a, got {b.shape[0]}"
        )
    blocks = [b]
    for _ in range(a.shape[0] - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def matrix_rank(m, tol: Tolerance = DEFAULT_TOL) -> int:
    """Numerical rank by SVD with a cutoff relative to the top value."""
    arr = as_matrix(m, "matrix")
    s = np.linalg.svd(arr, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rank_tol * s[0]))


def is_controllable(a, b, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Kalman rank test on the pair (a, b)."""
    a = as_matrix(a, "a", square=True)
    return matrix_rank(controllability_matrix(a, b), tol) == a.shape[0]


def spectrum_distance(first, second) -> float:
    """Largest matched gap between two eigenvalue multisets.

    Both inputs are 1-D complex arrays of equal length.  Values are paired
    greedily after a lexicographic (real, imag) sort, with each element of
    `first` matched to the closest still-unused element of `second`; the
    returned number is the largest pair distance.  This is robust where a
    plain sorted elementwise comparison is not: round-off can swap the
    order of nearly repeated complex pairs.
    """
    a = np.asarray(first, dtype=complex).ravel()
    b = np.asarray(second, dtype=complex).ravel()
    if a.shape != b.shape:
        raise DimensionError(
            f"spectra must have equal lengths, got {a.size} and {b.size}"
        )
    a = a[np.lexsort((a.imag, a.real))]
    b = b[np.lexsort((b.imag, b.real))]
    used = np.zeros(b.size, dtype=bool)
    worst = 0.0
    for value in a:
        gaps = np.abs(b - value)
        gaps[used] = np.inf
        pick = int(np.argmin(gaps))
        used[pick] = True
        worst = max(worst, float(gaps[pick]))
    return worst
