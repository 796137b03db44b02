"""Gain synthesis and verification for watermark-ready controllers.

The synthesis goal is a feedback K under which every subcontroller's
watermark excites every output block: for each pair (i, j) some power k
with C_j (A+BK)^k B_i != 0 must exist within the first p powers.  Two
constructions are provided, one for square full-rank input stacks and one
for input blocks sharing a common range direction, plus observer-gain
search and certificate checks for the resulting closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import place_poles

from .errors import (
    ConditionViolationError,
    DimensionError,
    InputError,
    SynthesisError,
)
from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    as_matrix,
    controllability_matrix,
    is_controllable,
    is_schur_stable,
    matrix_rank,
    spectral_radius,
    symmetrize,
)
from .model import GainSet, PlantModel

__all__ = [
    "GainTripleReport",
    "design_feedback_square",
    "heymann_feedback",
    "shared_input_direction",
    "design_feedback_shared_range",
    "compute_watermark_lags",
    "closed_loop_matrix",
    "verify_gain_triple",
    "search_observer_gain",
    "verify_observer_lmis",
    "observer_stability_certificate",
]


def design_feedback_square(a, b, lam: float = 0.5, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Deadbeat-style feedback for a square, full-rank input stack.

    Builds a basis x_1, ..., x_p from the scaled input columns, with
    x_1 = b_1/|b_1| and x_{k+1} = lam^k b_{k+1}/|b_{k+1}|, chooses inputs
    u_k solving B u_k = x_{k+1} - A x_k (cyclically, with x_{p+1} =
    lam^p x_1), and returns K = U X^{-1}.  Under the returned gain the
    closed loop A + B K permutes the basis rays, so every eigenvalue has
    modulus |lam| and the pair (A+BK, b_i) is controllable for every
    input column b_i.
    """
    a = as_matrix(a, "a", square=True)
    b = as_matrix(b, "b", square=True)
    p = a.shape[0]
    if b.shape[0] != p:
        raise DimensionError(f"b must be {p}x{p} to match a, got {b.shape}")
    lam = float(lam)
    if not np.isfinite(lam) or not 0.0 < abs(lam) < 1.0:
        raise InputError("lam must satisfy 0 < |lam| < 1")
    if matrix_rank(b, tol) < p:
        raise InputError("b must have full rank")

    basis = np.empty((p, p))
    inputs = np.empty((p, p))
    for k in range(p):
        col = b[:, k]
        basis[:, k] = (lam**k) * col / np.linalg.norm(col)
    closing = (lam**p) * b[:, 0] / np.linalg.norm(b[:, 0])
    for k in range(p):
        target = basis[:, k + 1] if k + 1 < p else closing
        inputs[:, k] = np.linalg.solve(b, target - a @ basis[:, k])
    gain = np.linalg.solve(basis.T, inputs.T).T

    moduli = np.abs(np.linalg.eigvals(a + b @ gain))
    if np.abs(moduli - abs(lam)).max() > 1e-6 * max(1.0, abs(lam)):
        raise SynthesisError(
            "feedback construction lost accuracy; the input basis is too "
            "ill-conditioned"
        )
    return gain


def heymann_feedback(a, b, v, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Feedback K' making (A + B K', B v) controllable from one direction.

    Requires (a, b) controllable and B v nonzero.  The gain is built
    greedily: starting from x_1 = Bv/|Bv|, each step picks the input u_k
    whose successor A x_k + B u_k has the largest component outside the
    span of the chain so far, which for a controllable pair can always be
    made nonzero before the chain fills the state space.
    """
    a = as_matrix(a, "a", square=True)
    b = as_matrix(b, "b")
    p = a.shape[0]
    if b.shape[0] != p:
        raise DimensionError(f"b must have {p} rows, got {b.shape[0]}")
    v = np.asarray(v, dtype=float).ravel()
    if v.size != b.shape[1]:
        raise DimensionError(
            f"v must have length {b.shape[1]}, got {v.size}"
        )
    if not np.all(np.isfinite(v)):
        raise InputError("v contains non-finite entries")
    direction = b @ v
    norm = np.linalg.norm(direction)
    if norm <= tol.rank_tol * max(1.0, np.abs(b).max()):
        raise InputError("b @ v is numerically zero")
    if not is_controllable(a, b, tol):
        raise SynthesisError("(a, b) is not controllable")

    n_inputs = b.shape[1]
    chain = np.zeros((p, p))
    inputs = np.zeros((n_inputs, p))
    chain[:, 0] = direction / norm
    ortho = np.zeros((p, 0))
    for k in range(p):
        x_k = chain[:, k]
        residual = x_k - ortho @ (ortho.T @ x_k)
        residual -= ortho @ (ortho.T @ residual)
        r_norm = np.linalg.norm(residual)
        if r_norm <= tol.rank_tol * max(1.0, np.linalg.norm(x_k)):
            raise SynthesisError(
                "chain extension collapsed; (a, b) is numerically "
                "uncontrollable from the given direction"
            )
        ortho = np.hstack([ortho, (residual / r_norm)[:, None]])
        if k == p - 1:
            break
        projector = np.eye(p) - ortho @ ortho.T
        reachable = projector @ b
        drift = projector @ (a @ x_k)
        candidates = [np.zeros(n_inputs)]
        u_mat, s_vals, vt = np.linalg.svd(reachable)
        if s_vals.size and s_vals[0] > tol.rank_tol:
            scale = max(1.0, np.linalg.norm(x_k)) * s_vals[0]
            for sign in (1.0, -1.0):
                target = drift + sign * scale * u_mat[:, 0]
                u_fit, *_ = np.linalg.lstsq(reachable, target - drift, rcond=None)
                candidates.append(u_fit)
        best_u = max(
            candidates,
            key=lambda u: np.linalg.norm(drift + reachable @ u),
        )
        inputs[:, k] = best_u
        chain[:, k + 1] = a @ x_k + b @ best_u
    gain = np.linalg.solve(chain.T, inputs.T).T
    if not is_controllable(a + b @ gain, direction[:, None], tol):
        raise SynthesisError(
            "constructed gain failed the single-direction controllability "
            "check; the instance is too ill-conditioned"
        )
    return gain


def shared_input_direction(b_blocks, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Input vector v whose image B v lies in every block's range.

    The intersection of the column spaces is folded pairwise; a
    SynthesisError is raised when it is trivial.  The returned v is
    scaled so |B v| = 1.
    """
    blocks = [as_matrix(b, f"b_blocks[{i}]") for i, b in enumerate(b_blocks)]
    if not blocks:
        raise InputError("at least one input block is required")
    p = blocks[0].shape[0]
    for i, blk in enumerate(blocks):
        if blk.shape[0] != p:
            raise DimensionError(f"b_blocks[{i}] must have {p} rows")

    def orth(m: np.ndarray) -> np.ndarray:
        u, s, _ = np.linalg.svd(m, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            return np.zeros((m.shape[0], 0))
        rank = int(np.count_nonzero(s > tol.rank_tol * s[0]))
        return u[:, :rank]

    shared = orth(blocks[0])
    for blk in blocks[1:]:
        basis = orth(blk)
        if shared.shape[1] == 0 or basis.shape[1] == 0:
            shared = np.zeros((p, 0))
            break
        paired = np.hstack([shared, -basis])
        u, s, vt = np.linalg.svd(paired)
        rank = int(np.count_nonzero(s > tol.rank_tol * s[0]))
        null_basis = vt[rank:].T
        if null_basis.shape[1] == 0:
            shared = np.zeros((p, 0))
            break
        shared = orth(shared @ null_basis[: shared.shape[1]])
    if shared.shape[1] == 0:
        raise SynthesisError("the input blocks have no shared range direction")

    stacked = np.hstack(blocks)
    target = shared[:, 0]
    v, *_ = np.linalg.lstsq(stacked, target, rcond=None)
    image = stacked @ v
    if np.linalg.norm(image - target) > 1e-8:
        raise SynthesisError("shared direction could not be realised exactly")
    return v / np.linalg.norm(image)


def _place_single_input(a: np.ndarray, b_col: np.ndarray, pole: float) -> np.ndarray:
    """Row gain g with eig(a + b_col g) all at `pole` (Ackermann form)."""
    p = a.shape[0]
    ctrb = controllability_matrix(a, b_col.reshape(-1, 1))
    coeffs = np.poly(np.full(p, pole))
    phi = np.zeros_like(a)
    for c in coeffs:
        phi = phi @ a + c * np.eye(p)
    selector = np.zeros(p)
    selector[-1] = 1.0
    row = -np.linalg.solve(ctrb.T, selector) @ phi
    return row.reshape(1, p)


def design_feedback_shared_range(
    a,
    b_blocks,
    rho_target: float = 0.5,
    tol: Tolerance = DEFAULT_TOL,
) -> np.ndarray:
    """Stabilising, watermark-ready feedback for blocks with a shared range.

    Picks v with B v in every range(B_i), applies the single-direction
    construction of heymann_feedback, then places all closed-loop poles of
    the resulting single-input pair at rho_target through a rank-one
    update K = K' + v g.  The returned stacked gain keeps A + B K Schur
    stable; it raises SynthesisError when the shared range is empty or
    (a, B) is uncontrollable.
    """
    a = as_matrix(a, "a", square=True)
    if not 0.0 <= abs(rho_target) < 1.0:
        raise InputError("rho_target must have modulus below 1")
    v = shared_input_direction(b_blocks, tol)
    stacked = np.hstack([as_matrix(b, "b") for b in b_blocks])
    base_gain = heymann_feedback(a, stacked, v, tol)
    direction = stacked @ v
    row = _place_single_input(a + stacked @ base_gain, direction, rho_target)
    gain = base_gain + np.outer(v, row)
    if not is_schur_stable(a + stacked @ gain, tol):
        raise SynthesisError(
            "pole placement lost stability; the single-input chain is too "
            "ill-conditioned"
        )
    return gain


def compute_watermark_lags(
    a,
    b_blocks,
    c_blocks,
    k,
    tol: Tolerance = DEFAULT_TOL,
) -> np.ndarray:
    """Smallest power k with C_j (A+BK)^k B_i nonzero, for every pair.

    Entry (i, j) of the returned integer array is the lag after which
    subcontroller i's watermark first shows in subcontroller j's output.
    Magnitudes are compared entrywise against rank_tol times the largest
    magnitude seen for that pair across all powers up to p-1; if a pair
    never produces a nonzero product, ConditionViolationError names it.
    """
    a = as_matrix(a, "a", square=True)
    k = as_matrix(k, "k")
    p = a.shape[0]
    blocks_b = [as_matrix(b, f"b_blocks[{i}]") for i, b in enumerate(b_blocks)]
    blocks_c = [as_matrix(c, f"c_blocks[{j}]") for j, c in enumerate(c_blocks)]
    stacked = np.hstack(blocks_b)
    if k.shape != (stacked.shape[1], p):
        raise DimensionError(
            f"k must be {stacked.shape[1]}x{p}, got {k.shape}"
        )
    closed = a + stacked @ k
    powers = [np.eye(p)]
    for _ in range(p - 1):
        powers.append(closed @ powers[-1])

    kappa = len(blocks_b)
    n_out = len(blocks_c)
    lags = np.zeros((kappa, n_out), dtype=int)
    for i, b_i in enumerate(blocks_b):
        for j, c_j in enumerate(blocks_c):
            magnitudes = [np.abs(c_j @ pw @ b_i).max() for pw in powers]
            scale = max(magnitudes)
            if scale == 0.0:
                raise ConditionViolationError(i, j)
            for lag, mag in enumerate(magnitudes):
                if mag > tol.rank_tol * scale:
                    lags[i, j] = lag
                    break
            else:
                raise ConditionViolationError(i, j)
    return lags


def closed_loop_matrix(model: PlantModel, gains: GainSet) -> np.ndarray:
    """Full closed-loop transition in (x, delta_1, d_2, ..., d_kappa) form.

    delta_i is subcontroller i's observer error and d_i = delta_i -
    delta_1.  In these coordinates the matrix is block triangular with
    diagonal blocks A+BK, A+LC and kappa-1 copies of A+BK+LC, so its
    spectrum is the union of those three spectra.
    """
    gains.check_compatible(model)
    p, kappa = model.p, model.kappa
    a, b, c = model.a, model.b, model.c
    k, l_stack = gains.k, gains.l
    full = np.zeros(((1 + kappa) * p, (1 + kappa) * p))
    bk = b @ k
    full[:p, :p] = a + bk
    full[:p, p : 2 * p] = bk
    full[p : 2 * p, p : 2 * p] = a + l_stack @ c
    for idx in range(2, kappa + 1):
        coupling = model.b_blocks[idx - 1] @ gains.k_blocks[idx - 1]
        full[:p, idx * p : (idx + 1) * p] = coupling
        full[p : 2 * p, idx * p : (idx + 1) * p] = -coupling
        full[idx * p : (idx + 1) * p, idx * p : (idx + 1) * p] = (
            a + bk + l_stack @ c
        )
    return full


@dataclass(frozen=True)
class GainTripleReport:
    """Spectral radii of the three matrices that govern closed-loop decay."""

    rho_feedback: float
    rho_observer: float
    rho_combined: float
    ok: bool

    def __str__(self) -> str:
        verdict = "stable" if self.ok else "NOT stable"
        return (
            f"rho(A+BK) = {self.rho_feedback:.10f}, "
            f"rho(A+LC) = {self.rho_observer:.10f}, "
            f"rho(A+BK+LC) = {self.rho_combined:.10f} -> {verdict}"
        )


def verify_gain_triple(
    model: PlantModel, gains: GainSet, tol: Tolerance = DEFAULT_TOL
) -> GainTripleReport:
    """Spectral radii of A+BK, A+LC and A+BK+LC, with a joint verdict."""
    gains.check_compatible(model)
    a, b, c = model.a, model.b, model.c
    k, l_stack = gains.k, gains.l
    rho_fb = spectral_radius(a + b @ k)
    rho_ob = spectral_radius(a + l_stack @ c)
    rho_all = spectral_radius(a + b @ k + l_stack @ c)
    limit = 1.0 - tol.stability_margin
    ok = rho_fb < limit and rho_ob < limit and rho_all < limit
    return GainTripleReport(rho_fb, rho_ob, rho_all, ok)


def search_observer_gain(
    model: PlantModel,
    k,
    attempts: int = 50,
    seed: int = 0,
    tol: Tolerance = DEFAULT_TOL,
) -> np.ndarray:
    """Observer gain L making both A+LC and A+BK+LC Schur stable.

    Tries L = 0 first, then pole placement on the transposed pair with
    seeded random pole sets inside the unit disc.  Raises SynthesisError
    after `attempts` failed candidates.
    """
    k = as_matrix(k, "k")
    a, b, c = model.a, model.b, model.c
    if k.shape != (model.q_total, model.p):
        raise DimensionError(
            f"k must be {model.q_total}x{model.p}, got {k.shape}"
        )
    if attempts < 1:
        raise InputError("attempts must be positive")
    closed = a + b @ k
    limit = 1.0 - tol.stability_margin

    def accepted(cand: np.ndarray) -> bool:
        return (
            spectral_radius(a + cand @ c) < limit
            and spectral_radius(closed + cand @ c) < limit
        )

    zero = np.zeros((model.p, model.m_total))
    if accepted(zero):
        return zero

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 97))))
    for _ in range(attempts):
        poles = rng.uniform(0.05, 0.9, model.p) * rng.choice([-1.0, 1.0], model.p)
        if np.unique(np.round(poles, 8)).size < model.p:
            continue
        try:
            placed = place_poles(a.T, c.T, np.sort(poles))
        except ValueError:
            continue
        candidate = -placed.gain_matrix.T
        if accepted(candidate):
            return candidate
    raise SynthesisError(
        f"no stabilising observer gain found in {attempts} attempts; the "
        f"pair (A, C) may not be detectable"
    )


def verify_observer_lmis(
    model: PlantModel,
    k,
    l_stack,
    q,
    r,
    tol: Tolerance = DEFAULT_TOL,
) -> bool:
    """Check a quadratic stability certificate for an observer gain.

    Accepts when Q is symmetric positive definite, both bordered matrices

        [[Q, A^T Q + C^T R], [Q A + R^T C, Q]]
        [[Q, (A+BK)^T Q + C^T R], [Q (A+BK) + R^T C, Q]]

    are positive definite, and L matches Q^{-1} R^T.  Positive
    definiteness is decided by the smallest eigenvalue of the
    symmetrised matrix against rank_tol relative to its largest entry.
    """
    k = as_matrix(k, "k")
    l_stack = as_matrix(l_stack, "l")
    q = as_matrix(q, "q", square=True)
    r = as_matrix(r, "r")
    p, m = model.p, model.m_total
    if q.shape[0] != p:
        raise DimensionError(f"q must be {p}x{p}, got {q.shape}")
    if r.shape != (m, p):
        raise DimensionError(f"r must be {m}x{p}, got {r.shape}")
    if l_stack.shape != (p, m):
        raise DimensionError(f"l must be {p}x{m}, got {l_stack.shape}")
    if np.abs(q - q.T).max() > 1e-8 * (1.0 + np.abs(q).max()):
        return False
    q = symmetrize(q)

    def positive(mat: np.ndarray) -> bool:
        sym = symmetrize(mat)
        scale = 1.0 + np.abs(sym).max()
        return np.linalg.eigvalsh(sym).min() > tol.rank_tol * scale

    if not positive(q):
        return False
    a, c = model.a, model.c
    closed = a + model.b @ k
    for transition in (a, closed):
        upper = transition.T @ q + c.T @ r
        bordered = np.block([[q, upper], [upper.T, q]])
        if not positive(bordered):
            return False
    recovered = np.linalg.solve(q, r.T)
    gap = np.abs(recovered - l_stack).max()
    return bool(gap <= 1e-7 * (1.0 + np.abs(l_stack).max()))


def observer_stability_certificate(
    model: PlantModel,
    k,
    l_stack,
    tol: Tolerance = DEFAULT_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Construct (Q, R) witnessing observer stability for a given L.

    Solves the coupled fixpoint P = F1 P F1^T + F2 P F2^T + I for the two
    closed-loop transitions F1 = A+LC and F2 = A+BK+LC when the coupled
    spectral radius allows it, falling back to sums of the individual
    fixpoint solutions; every candidate is screened with
    verify_observer_lmis and the first accepted pair is returned.  Raises
    SynthesisError when no candidate passes, in particular whenever either
    transition is unstable.
    """
    k = as_matrix(k, "k")
    l_stack = as_matrix(l_stack, "l")
    a, b, c = model.a, model.b, model.c
    p = model.p
    f1 = a + l_stack @ c
    f2 = a + b @ k + l_stack @ c

    candidates: list[np.ndarray] = []
    coupled = np.kron(f1, f1) + np.kron(f2, f2)
    if np.abs(np.linalg.eigvals(coupled)).max() < 1.0 - tol.stability_margin:
        vec = np.linalg.solve(
            np.eye(p * p) - coupled, np.eye(p).reshape(-1)
        )
        candidates.append(symmetrize(vec.reshape(p, p)))
    singles = []
    for f in (f1, f2):
        if spectral_radius(f) < 1.0 - tol.stability_margin:
            vec = np.linalg.solve(
                np.eye(p * p) - np.kron(f, f), np.eye(p).reshape(-1)
            )
            singles.append(symmetrize(vec.reshape(p, p)))
    if len(singles) == 2:
        candidates.append(singles[0] + singles[1])
        candidates.append(2.0 * singles[0] + singles[1])
        candidates.append(singles[0] + 2.0 * singles[1])
    candidates.append(np.eye(p))

    for p_mat in candidates:
        if np.linalg.eigvalsh(p_mat).min() <= 0:
            continue
        q = symmetrize(np.linalg.inv(p_mat))
        r = l_stack.T @ q
        if verify_observer_lmis(model, k, l_stack, q, r, tol):
            return q, r
    raise SynthesisError(
        "no quadratic certificate found; the observer closed loop is "
        "unstable or too close to the stability boundary"
    )
