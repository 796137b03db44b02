"""Watermark detector: stationary covariances, scale matrices, NLL test.

The detector checks, per subcontroller i and window of length ell, that
the joint second moments of the lagged watermark e_{i,n-k'-1} and the
innovation-like residual C_j xhat_{i,n} - s_{i,j,n} still match their
no-attack values.  Under no attack the windowed scatter sums follow a
Wishart law with ell degrees of freedom and scale R_{I,J}; the statistic
is that law's negative log-likelihood summed over j, and the threshold is
calibrated empirically on simulated null windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve

from .errors import (
    DegenerateWindowError,
    DimensionError,
    InputError,
    ModelError,
    NotCalibratedError,
    TraceRangeError,
)
from .linalg import DEFAULT_TOL, Tolerance, solve_discrete_lyapunov, symmetrize
from .model import GainSet, PlantModel
from .sim import AttackScenario, SimulationTrace, simulate

__all__ = [
    "COEFFICIENT_VARIANTS",
    "DetectorModel",
    "stacked_error_transition",
    "stacked_noise_covariance",
    "stationary_delta_covariance",
    "DeltaCovariance",
    "delta_excitation_cross_covariance",
    "build_detector",
    "psi_vector",
    "window_scatter",
    "wishart_nll",
    "window_nll_series",
    "calibrate_threshold",
    "null_rejection_rates",
    "decide",
]

COEFFICIENT_VARIANTS = ("paper", "dimension-consistent")

DEFAULT_BURN_IN = 500


def stacked_error_transition(model: PlantModel, gains: GainSet) -> np.ndarray:
    """Transition of the stacked observer errors.

    Block (i, j) equals delta_ij (A+BK+LC) - B_j K_j: every error block
    evolves through the observer transition while the watermark each
    subcontroller cannot see couples all blocks through the plant.
    """
    gains.check_compatible(model)
    p, kappa = model.p, model.kappa
    core = model.a + model.b @ gains.k + gains.l @ model.c
    coupling = np.hstack(
        [model.b_blocks[j] @ gains.k_blocks[j] for j in range(kappa)]
    )
    return np.kron(np.eye(kappa), core) - np.kron(
        np.ones((kappa, 1)), coupling
    )


def stacked_noise_covariance(model: PlantModel, gains: GainSet) -> np.ndarray:
    """Covariance of the disturbance driving the stacked error dynamics.

    The step input is G_E E_n + G_W w_n + G_Z z_n with
    G_E = blkdiag(B_1..B_kappa) - 1 (x) B, G_W = -1 (x) I and
    G_Z = -1 (x) L; the E_n term keeps its cross structure because the
    own-watermark feedforward cancels only the diagonal blocks.
    """
    gains.check_compatible(model)
    kappa, p = model.kappa, model.p
    ones = np.ones((kappa, 1))
    g_e = block_diag(*model.b_blocks) - np.kron(ones, model.b)
    g_w = -np.kron(ones, np.eye(p))
    g_z = -np.kron(ones, gains.l)
    return symmetrize(
        g_e @ gains.sigma_e @ g_e.T
        + g_w @ model.sigma_w @ g_w.T
        + g_z @ model.sigma_z @ g_z.T
    )


@dataclass(frozen=True)
class DeltaCovariance:
    """Stationary covariance of the stacked observer errors."""

    sigma: np.ndarray
    p: int

    @property
    def kappa(self) -> int:
        return self.sigma.shape[0] // self.p

    def diagonal_block(self, i: int) -> np.ndarray:
        """Stationary covariance of subcontroller i's own observer error."""
        sl = slice(i * self.p, (i + 1) * self.p)
        return self.sigma[sl, sl]


def stationary_delta_covariance(
    model: PlantModel, gains: GainSet, tol: Tolerance = DEFAULT_TOL
) -> DeltaCovariance:
    """Solve the stationary fixpoint of the stacked error dynamics.

    Raises StabilityError when the stacked transition is not Schur
    stable, which happens exactly when A+LC or A+BK+LC is unstable.
    """
    transition = stacked_error_transition(model, gains)
    noise = stacked_noise_covariance(model, gains)
    sigma = solve_discrete_lyapunov(transition, noise, tol)
    return DeltaCovariance(sigma=sigma, p=model.p)


def delta_excitation_cross_covariance(
    model: PlantModel, gains: GainSet, i: int, lag: int
) -> np.ndarray:
    """Cross covariance of the stacked errors with a lagged watermark.

    Returns E[Delta_n e_{i,n-lag-1}^T], shape (kappa p, q_i).  At lag 0
    this is f_i (x) B_i Sigma_E_i - 1 (x) B_i Sigma_E_i, whose i-th
    vertical block vanishes: the own-watermark feedforward hides e_i
    from subcontroller i's error while every other block sees -B_i e_i.
    Larger lags propagate through the stacked transition.
    """
    gains.check_compatible(model)
    if not 0 <= i < model.kappa:
        raise InputError(f"subcontroller index {i} is out of range")
    lag = int(lag)
    if lag < 0:
        raise InputError("lag must be nonnegative")
    kappa = model.kappa
    selector = np.zeros((kappa, 1))
    selector[i] = 1.0
    ones = np.ones((kappa, 1))
    seeded = model.b_blocks[i] @ gains.sigma_e_blocks[i]
    base = np.kron(selector, seeded) - np.kron(ones, seeded)
    transition = stacked_error_transition(model, gains)
    return np.linalg.matrix_power(transition, lag) @ base


@dataclass
class DetectorModel:
    """Scale matrices, lags and configuration of the windowed NLL test.

    tau is None until calibrate_threshold fills in one threshold per
    subcontroller.  coefficient_variant selects the log-det coefficient:
    "paper" uses 1 - ell + m_i + q_i for every term of subcontroller i's
    statistic, "dimension-consistent" uses 1 - ell + m_j + q_i, matching
    the dimension of the (i, j) scatter matrix.  Either is usable since
    the threshold is calibrated on the statistic actually computed.
    """

    lags: np.ndarray
    r_table: dict[tuple[int, int], np.ndarray]
    window_len: int
    alpha: float
    m_sizes: list[int]
    q_sizes: list[int]
    coefficient_variant: str = "paper"
    tau: np.ndarray | None = None
    _solvers: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=int)
        if self.lags.ndim != 2 or self.lags.shape[0] != self.lags.shape[1]:
            raise DimensionError("lags must be a square integer table")
        if self.window_len < 1:
            raise InputError("window_len must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie strictly between 0 and 1")
        if self.coefficient_variant not in COEFFICIENT_VARIANTS:
            raise InputError(
                f"coefficient_variant must be one of {COEFFICIENT_VARIANTS}"
            )
        if self.tau is not None:
            self.tau = np.asarray(self.tau, dtype=float).reshape(self.kappa)

    @property
    def kappa(self) -> int:
        return self.lags.shape[0]

    def coefficient(self, i: int, j: int) -> float:
        if self.coefficient_variant == "paper":
            return 1.0 - self.window_len + self.m_sizes[i] + self.q_sizes[i]
        return 1.0 - self.window_len + self.m_sizes[j] + self.q_sizes[i]

    def scale_solver(self, i: int, j: int):
        """Cached Cholesky factor of R_{(i,j)}; ModelError when singular."""
        key = (i, j)
        if key not in self._solvers:
            try:
                self._solvers[key] = cho_factor(self.r_table[key])
            except np.linalg.LinAlgError as exc:
                raise ModelError(
                    f"scale matrix for pair {key} is not positive definite"
                ) from exc
        return self._solvers[key]


def build_detector(
    model: PlantModel,
    gains: GainSet,
    lags,
    window_len: int = 100,
    alpha: float = 0.05,
    coefficient_variant: str = "paper",
    tol: Tolerance = DEFAULT_TOL,
) -> DetectorModel:
    """Assemble every pair's scale matrix and return an uncalibrated detector.

    The (i, j) scale matrix is

        [[Sigma_E_i,            (C_j Q_ij)^T],
         [C_j Q_ij,  C_j D_i C_j^T + Sigma_Z_j]]

    where D_i is subcontroller i's stationary error covariance and Q_ij
    is the delta_i block of the lag-k'_{i,j} cross covariance with e_i;
    that block is the one whose predictions match simulation.  Requires
    window_len >= q_i + m_j for every pair.
    """
    gains.check_compatible(model)
    lags = np.asarray(lags, dtype=int)
    kappa = model.kappa
    if lags.shape != (kappa, kappa):
        raise DimensionError(f"lags must be {kappa}x{kappa}, got {lags.shape}")
    window_len = int(window_len)
    for i in range(kappa):
        for j in range(kappa):
            if window_len < model.q_sizes[i] + model.m_sizes[j]:
                raise InputError(
                    f"window_len {window_len} is below the dimension "
                    f"{model.q_sizes[i] + model.m_sizes[j]} of pair ({i}, {j})"
                )

    delta_cov = stationary_delta_covariance(model, gains, tol)
    p = model.p
    r_table: dict[tuple[int, int], np.ndarray] = {}
    cross_cache: dict[tuple[int, int], np.ndarray] = {}
    for i in range(kappa):
        for j in range(kappa):
            lag = int(lags[i, j])
            if (i, lag) not in cross_cache:
                cross_cache[(i, lag)] = delta_excitation_cross_covariance(
                    model, gains, i, lag
                )
            own_block = cross_cache[(i, lag)][i * p : (i + 1) * p]
            c_j = model.c_blocks[j]
            cross = c_j @ own_block
            lower = c_j @ delta_cov.diagonal_block(i) @ c_j.T
            lower = symmetrize(lower) + model.sigma_z_blocks[j]
            scale = np.block([[gains.sigma_e_blocks[i], cross.T], [cross, lower]])
            scale = symmetrize(scale)
            floor = -1e-8 * (1.0 + np.abs(scale).max())
            if np.linalg.eigvalsh(scale).min() < floor:
                raise ModelError(
                    f"assembled scale matrix for pair ({i}, {j}) is not "
                    f"positive semidefinite"
                )
            r_table[(i, j)] = scale
    return DetectorModel(
        lags=lags,
        r_table=r_table,
        window_len=window_len,
        alpha=float(alpha),
        m_sizes=list(model.m_sizes),
        q_sizes=list(model.q_sizes),
        coefficient_variant=coefficient_variant,
    )


def psi_vector(
    trace: SimulationTrace, n: int, i: int, j: int, lags
) -> np.ndarray:
    """Test vector for pair (i, j) at step n.

    Concatenates the watermark e_i emitted k'_{i,j}+1 steps earlier with
    the residual C_j xhat_{i,n} - s_{i,j,n}; under no attack the residual
    equals C_j delta_{i,n} - z_{j,n}.
    """
    lags = np.asarray(lags, dtype=int)
    model = trace.model
    lag = int(lags[i, j])
    past = n - lag - 1
    if past < 0 or n >= trace.steps:
        raise TraceRangeError(
            f"psi at step {n} for pair ({i}, {j}) needs steps "
            f"{past}..{n} inside the trace of length {trace.steps}"
        )
    residual = model.c_blocks[j] @ trace.xhat[n, i] - trace.s_block(i, j)[n]
    return np.concatenate([trace.e_block(i)[past], residual])


def _scatter_sum(
    trace: SimulationTrace,
    start: int,
    i: int,
    j: int,
    lags,
    window_len: int,
) -> np.ndarray:
    """Raw sum of psi psi^T over steps start .. start+window_len-1.

    Accumulates in ascending n, one rank-one update per step.  This sum
    (not its average) is the Wishart-distributed variable with window_len
    degrees of freedom whose scale matrix the detector stores, so it is
    what the NLL statistic consumes.
    """
    if window_len < 1:
        raise InputError("window_len must be positive")
    first = psi_vector(trace, start, i, j, lags)
    scatter = np.outer(first, first)
    for n in range(start + 1, start + window_len):
        sample = psi_vector(trace, n, i, j, lags)
        scatter += np.outer(sample, sample)
    return scatter


def window_scatter(
    trace: SimulationTrace,
    start: int,
    i: int,
    j: int,
    lags,
    window_len: int,
) -> np.ndarray:
    """Average of psi psi^T over steps start .. start+window_len-1.

    Equals the ascending-order rank-one accumulation divided once by the
    window length, so it reproduces the obvious reference loop bit for
    bit.
    """
    return _scatter_sum(trace, start, i, j, lags, window_len) / window_len


def wishart_nll(s_table, detector: DetectorModel, i: int) -> float:
    """Negative log-likelihood of one window's scatter matrices.

    s_table holds one scatter matrix per source subcontroller j; the
    statistic is sum_j coef(i,j) log det S_j + sum_j tr(R_{i,j}^{-1} S_j)
    with the coefficient picked by the detector's variant.  Raises
    DegenerateWindowError when any scatter matrix is singular and
    ModelError when a scale matrix cannot be factorised.
    """
    scatters = list(s_table)
    if len(scatters) != detector.kappa:
        raise DimensionError(
            f"s_table must hold {detector.kappa} matrices, got {len(scatters)}"
        )
    total = 0.0
    for j, scatter in enumerate(scatters):
        scatter = np.asarray(scatter, dtype=float)
        sign, logdet = np.linalg.slogdet(scatter)
        if sign <= 0 or not np.isfinite(logdet):
            raise DegenerateWindowError(
                f"scatter matrix for pair ({i}, {j}) is singular; enlarge "
                f"the window"
            )
        total += detector.coefficient(i, j) * logdet
        total += float(np.trace(cho_solve(detector.scale_solver(i, j), scatter)))
    return float(total)


def window_nll_series(
    trace: SimulationTrace,
    detector: DetectorModel,
    start: int,
    count: int,
) -> tuple[np.ndarray, np.ndarray]:
    """NLL of `count` disjoint windows beginning at `start`.

    Each window's statistic is the Wishart NLL of the raw scatter sums,
    the variables with window_len degrees of freedom; an attack that
    inflates the residuals inflates the statistic.  Returns
    (window_starts, values) with values of shape (kappa, count).
    """
    if count < 1:
        raise InputError("count must be positive")
    ell = detector.window_len
    kappa = detector.kappa
    starts = start + ell * np.arange(count)
    values = np.empty((kappa, count))
    for w, w_start in enumerate(starts):
        for i in range(kappa):
            scatters = [
                _scatter_sum(trace, int(w_start), i, j, detector.lags, ell)
                for j in range(kappa)
            ]
            values[i, w] = wishart_nll(scatters, detector, i)
    return starts, values


def calibrate_threshold(
    model: PlantModel,
    gains: GainSet,
    detector: DetectorModel,
    windows: int = 2000,
    seed: int = 0,
    burn_in: int = DEFAULT_BURN_IN,
) -> np.ndarray:
    """Per-subcontroller empirical (1-alpha)-quantile of the null NLL.

    Simulates the no-attack loop for burn_in + windows * ell steps,
    computes the NLL on disjoint windows, and returns the order statistic
    of rank ceil((1-alpha) * windows) per subcontroller.  Deterministic
    given the seed.  Requires at least 100 windows.
    """
    if windows < 100:
        raise InputError("calibration needs at least 100 windows")
    burn_in = int(burn_in)
    if burn_in < 1:
        raise InputError("burn_in must be positive (psi needs lagged steps)")
    steps = burn_in + windows * detector.window_len
    trace = simulate(
        model,
        gains,
        AttackScenario.none(model.kappa),
        steps=steps,
        seed=seed,
    )
    _, values = window_nll_series(trace, detector, burn_in, windows)
    return np.quantile(values, 1.0 - detector.alpha, axis=1, method="inverted_cdf")


def null_rejection_rates(
    model: PlantModel,
    gains: GainSet,
    detector: DetectorModel,
    windows: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
) -> np.ndarray:
    """Observed per-subcontroller rejection rates on a fresh null run."""
    if detector.tau is None:
        raise NotCalibratedError("detector has no threshold yet")
    steps = burn_in + windows * detector.window_len
    trace = simulate(
        model,
        gains,
        AttackScenario.none(model.kappa),
        steps=steps,
        seed=seed,
    )
    _, values = window_nll_series(trace, detector, burn_in, windows)
    return (values > detector.tau[:, None]).mean(axis=1)


def decide(nll_value: float, detector: DetectorModel, i: int) -> str:
    """'reject' when the statistic exceeds subcontroller i's threshold.

    The boundary accepts: a statistic equal to the threshold is still
    consistent with the no-attack hypothesis.
    """
    if detector.tau is None:
        raise NotCalibratedError(
            "decide requires a calibrated detector; run calibrate_threshold"
        )
    if not 0 <= i < detector.kappa:
        raise InputError(f"subcontroller index {i} is out of range")
    return "reject" if nll_value > detector.tau[i] else "accept"
