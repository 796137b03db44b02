"""Networked closed-loop simulation under sensor and link attacks.

simulate() pre-generates every noise stream from independent
counter-based generators, marches the coupled plant/observer recursion
through a compiled kernel (pure-numpy fallback when the extension is not
built), and returns a trace recording every signal the detector needs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError, InputError
from .linalg import as_matrix
from .model import GainSet, PlantModel, _check_covariance

try:
    from . import _loop as _compiled_loop
except ImportError:
    _compiled_loop = None
from . import _loop_py as _python_loop

__all__ = [
    "AttackScenario",
    "SimulationTrace",
    "simulate",
    "derived_delta",
    "empirical_covariance",
    "write_trace_csv",
    "available_kernels",
    "DEFAULT_KERNEL",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e12

DEFAULT_KERNEL = "compiled" if _compiled_loop is not None else "python"


def available_kernels() -> list[str]:
    """Names accepted by simulate(kernel=...), fastest first."""
    names = ["python"]
    if _compiled_loop is not None:
        names.insert(0, "compiled")
    return names


def _stream(seed: int, *tag: int) -> np.random.Generator:
    """Independent counter-based stream for one noise source."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((seed, *tag)))
    )


def _covariance_factor(cov: np.ndarray) -> np.ndarray | None:
    """Matrix F with F F^T = cov, or None when cov is exactly zero."""
    if not cov.any():
        return None
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        values, vectors = np.linalg.eigh(cov)
        return vectors * np.sqrt(np.clip(values, 0.0, None))


@dataclass
class AttackScenario:
    """Additive Gaussian attacks on measurements and communication links.

    sensor
        Per-subcontroller covariance of the disturbance on that
        subcontroller's own measurement (None for no attack).  A sensor
        attack corrupts the measurement at its source, so every receiver
        sees it.
    comm
        Mapping (i, j) -> covariance of the disturbance added to the
        measurement of j as received by i only.  Diagonal pairs are not
        allowed: a subcontroller's channel to itself is not a link.
    """

    sensor: list[np.ndarray | None] = field(default_factory=list)
    comm: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @classmethod
    def none(cls, kappa: int) -> "AttackScenario":
        return cls(sensor=[None] * kappa, comm={})

    def check_compatible(self, model: PlantModel) -> None:
        if len(self.sensor) != model.kappa:
            raise DimensionError(
                f"sensor list must have {model.kappa} entries, got "
                f"{len(self.sensor)}"
            )
        for i, cov in enumerate(self.sensor):
            if cov is not None:
                self.sensor[i] = _check_covariance(
                    cov, f"sensor[{i}]", model.m_sizes[i]
                )
        for (i, j), cov in list(self.comm.items()):
            if not (0 <= i < model.kappa and 0 <= j < model.kappa):
                raise InputError(f"comm pair ({i}, {j}) is out of range")
            if i == j:
                raise InputError(
                    f"comm pair ({i}, {j}) targets a subcontroller's own "
                    f"measurement; use a sensor attack for that"
                )
            self.comm[(i, j)] = _check_covariance(
                cov, f"comm[{i},{j}]", model.m_sizes[j]
            )


@dataclass
class SimulationTrace:
    """Everything recorded while marching the closed loop.

    Row n of each array is the signal at step n; per-subcontroller
    signals are stored stacked, with block boundaries given by the model
    offsets.  The noise inputs (w, z, e, v, nu) are stored alongside the
    responses so every recursion that produced the trace can be replayed
    exactly.
    """

    model: PlantModel
    x: np.ndarray
    xhat: np.ndarray
    y: np.ndarray
    s: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray
    e: np.ndarray
    v: np.ndarray
    nu: np.ndarray
    seed: int

    @property
    def steps(self) -> int:
        return self.x.shape[0]

    def y_block(self, i: int) -> np.ndarray:
        off = self.model.m_offsets
        return self.y[:, off[i] : off[i + 1]]

    def e_block(self, i: int) -> np.ndarray:
        off = self.model.q_offsets
        return self.e[:, off[i] : off[i + 1]]

    def u_block(self, i: int) -> np.ndarray:
        off = self.model.q_offsets
        return self.u[:, off[i] : off[i + 1]]

    def s_block(self, i: int, j: int) -> np.ndarray:
        """Measurement of j as received by i, all steps."""
        off = self.model.m_offsets
        return self.s[:, i, off[j] : off[j + 1]]

    def xhat_block(self, i: int) -> np.ndarray:
        return self.xhat[:, i, :]

    def to_csv(self, path) -> None:
        write_trace_csv(self, path)


def _draw_noise(
    model: PlantModel,
    gains: GainSet,
    attack: AttackScenario,
    steps: int,
    seed: int,
) -> dict[str, np.ndarray]:
    kappa = model.kappa
    m_off = model.m_offsets

    w_factor = _covariance_factor(model.sigma_w)
    if w_factor is None:
        w = np.zeros((steps, model.p))
    else:
        w = _stream(seed, 0).standard_normal((steps, model.p)) @ w_factor.T

    z = np.zeros((steps, model.m_total))
    for i in range(kappa):
        factor = _covariance_factor(model.sigma_z_blocks[i])
        if factor is not None:
            z[:, m_off[i] : m_off[i + 1]] = (
                _stream(seed, 1, i).standard_normal((steps, model.m_sizes[i]))
                @ factor.T
            )

    e = np.zeros((steps, model.q_total))
    q_off = model.q_offsets
    for i in range(kappa):
        factor = _covariance_factor(gains.sigma_e_blocks[i])
        if factor is not None:
            e[:, q_off[i] : q_off[i + 1]] = (
                _stream(seed, 2, i).standard_normal((steps, model.q_sizes[i]))
                @ factor.T
            )

    v = np.zeros((steps, model.m_total))
    for i, cov in enumerate(attack.sensor):
        if cov is None:
            continue
        factor = _covariance_factor(cov)
        if factor is not None:
            v[:, m_off[i] : m_off[i + 1]] = (
                _stream(seed, 3, i).standard_normal((steps, model.m_sizes[i]))
                @ factor.T
            )

    nu = np.zeros((steps, kappa, model.m_total))
    for (i, j), cov in sorted(attack.comm.items()):
        factor = _covariance_factor(cov)
        if factor is not None:
            nu[:, i, m_off[j] : m_off[j + 1]] = (
                _stream(seed, 4, i, j).standard_normal((steps, model.m_sizes[j]))
                @ factor.T
            )

    return {"w": w, "z": z, "e": e, "v": v, "nu": nu}


def simulate(
    model: PlantModel,
    gains: GainSet,
    attack: AttackScenario | None = None,
    steps: int = 1000,
    seed: int = 0,
    x0=None,
    xhat0=None,
    kernel: str | None = None,
) -> SimulationTrace:
    """Run the networked closed loop and record every signal.

    Noise streams are drawn from per-source counter-based generators, so
    a given (seed, source) pair always yields the same values no matter
    which other sources are active; adding an attack never perturbs the
    process, measurement or watermark streams.  Initial conditions
    default to the origin.  Raises DivergenceError when any state
    magnitude exceeds 1e12 or stops being finite, and InputError for a
    non-positive step count or unknown kernel name.
    """
    gains.check_compatible(model)
    if attack is None:
        attack = AttackScenario.none(model.kappa)
    attack.check_compatible(model)
    steps = int(steps)
    if steps < 1:
        raise InputError("steps must be positive")
    if kernel is None:
        kernel = DEFAULT_KERNEL
    if kernel == "compiled" and _compiled_loop is None:
        raise InputError("compiled kernel is not available in this build")
    if kernel not in ("compiled", "python"):
        raise InputError(f"unknown kernel {kernel!r}")
    loop = _compiled_loop if kernel == "compiled" else _python_loop

    p, kappa = model.p, model.kappa
    if x0 is None:
        x0 = np.zeros(p)
    else:
        x0 = np.asarray(x0, dtype=float).reshape(p)
    if xhat0 is None:
        xhat0 = np.zeros((kappa, p))
    else:
        xhat0 = as_matrix(xhat0, "xhat0")
        if xhat0.shape != (kappa, p):
            raise DimensionError(f"xhat0 must be {kappa}x{p}, got {xhat0.shape}")
    if not np.all(np.isfinite(x0)):
        raise InputError("x0 contains non-finite entries")

    noise = _draw_noise(model, gains, attack, steps, seed)
    x_out = np.empty((steps, p))
    xhat_out = np.empty((steps, kappa, p))
    y_out = np.empty((steps, model.m_total))
    s_out = np.empty((steps, kappa, model.m_total))
    u_out = np.empty((steps, model.q_total))

    m_obs = model.a + model.b @ gains.k + gains.l @ model.c
    diverged = loop.run_closed_loop(
        np.ascontiguousarray(model.a),
        np.ascontiguousarray(m_obs),
        np.ascontiguousarray(model.b),
        np.ascontiguousarray(gains.k),
        np.ascontiguousarray(gains.l),
        np.ascontiguousarray(model.c),
        np.ascontiguousarray(model.q_offsets, dtype=np.intp),
        np.ascontiguousarray(model.m_offsets, dtype=np.intp),
        noise["w"],
        noise["z"],
        noise["e"],
        noise["v"],
        noise["nu"],
        np.ascontiguousarray(x0),
        np.ascontiguousarray(xhat0),
        x_out,
        xhat_out,
        y_out,
        s_out,
        u_out,
        DIVERGENCE_LIMIT,
    )
    if diverged >= 0:
        raise DivergenceError(int(diverged))
    return SimulationTrace(
        model=model,
        x=x_out,
        xhat=xhat_out,
        y=y_out,
        s=s_out,
        u=u_out,
        w=noise["w"],
        z=noise["z"],
        e=noise["e"],
        v=noise["v"],
        nu=noise["nu"],
        seed=seed,
    )


def derived_delta(trace: SimulationTrace) -> np.ndarray:
    """Stacked observer errors: row n is [xhat_1 - x; ...; xhat_kappa - x]."""
    steps = trace.steps
    return (trace.xhat - trace.x[:, None, :]).reshape(steps, -1)


def empirical_covariance(samples) -> np.ndarray:
    """Second-moment matrix about the origin, samples in rows."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InputError("samples must be a nonempty 2-D array, one row each")
    return (arr.T @ arr) / arr.shape[0]


def write_trace_csv(trace: SimulationTrace, path) -> None:
    """Write the trace as CSV with one row per step.

    Column order: the shared state x[k]; per subcontroller i the
    estimate xhat{i}[k]; per i the own measurement y{i}[k]; per ordered
    pair (i, j) the received measurement s{i}{j}[k]; per i the watermark
    e{i}[k]; per i the applied input u{i}[k].  Indices are 0-based and
    k counts within the block.  Values are written with repr-level
    precision (17 significant digits) so a reader recovers the exact
    doubles.
    """
    model = trace.model
    headers: list[str] = []
    blocks: list[np.ndarray] = []

    headers += [f"x[{k}]" for k in range(model.p)]
    blocks.append(trace.x)
    for i in range(model.kappa):
        headers += [f"xhat{i}[{k}]" for k in range(model.p)]
        blocks.append(trace.xhat_block(i))
    for i in range(model.kappa):
        headers += [f"y{i}[{k}]" for k in range(model.m_sizes[i])]
        blocks.append(trace.y_block(i))
    for i in range(model.kappa):
        for j in range(model.kappa):
            headers += [f"s{i}{j}[{k}]" for k in range(model.m_sizes[j])]
            blocks.append(trace.s_block(i, j))
    for i in range(model.kappa):
        headers += [f"e{i}[{k}]" for k in range(model.q_sizes[i])]
        blocks.append(trace.e_block(i))
    for i in range(model.kappa):
        headers += [f"u{i}[{k}]" for k in range(model.q_sizes[i])]
        blocks.append(trace.u_block(i))

    table = np.hstack(blocks)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(headers)
        for row in table:
            writer.writerow([f"{value:.17g}" for value in row])
