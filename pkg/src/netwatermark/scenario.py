"""Scenario files: JSON round-trip of plant, gains, detector and run setup.

A scenario document bundles everything one experiment needs: the plant
matrices, optional controller gains, detector configuration (window
length, false-alarm rate, calibrated thresholds), the attack to inject,
and run parameters (steps, burn-in, seed, initial conditions).  Matrices
are stored as nested row arrays; floats survive the round trip exactly
because JSON serialises Python floats via their shortest repr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .model import GainSet, PlantModel
from .sim import AttackScenario
from .stats import COEFFICIENT_VARIANTS

__all__ = [
    "DetectorConfig",
    "RunConfig",
    "Scenario",
    "load_scenario",
    "loads_scenario",
    "save_scenario",
    "dumps_scenario",
    "platoon_preset",
]


@dataclass
class DetectorConfig:
    """Detector settings carried by a scenario file."""

    window_len: int = 100
    alpha: float = 0.05
    calibration_windows: int = 2000
    coefficient_variant: str = "paper"
    tau: np.ndarray | None = None

    def __post_init__(self):
        self.window_len = int(self.window_len)
        self.alpha = float(self.alpha)
        self.calibration_windows = int(self.calibration_windows)
        if self.window_len < 1:
            raise ScenarioError("detector.window_len must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ScenarioError("detector.alpha must lie in (0, 1)")
        if self.coefficient_variant not in COEFFICIENT_VARIANTS:
            raise ScenarioError(
                "detector.coefficient_variant must be one of "
                f"{COEFFICIENT_VARIANTS}"
            )
        if self.tau is not None:
            self.tau = np.asarray(self.tau, dtype=float).ravel()


@dataclass
class RunConfig:
    """Simulation horizon and seeding carried by a scenario file."""

    steps: int = 2500
    burn_in: int = 500
    seed: int = 0
    x0: np.ndarray | None = None
    xhat0: np.ndarray | None = None

    def __post_init__(self):
        self.steps = int(self.steps)
        self.burn_in = int(self.burn_in)
        self.seed = int(self.seed)
        if self.steps < 1:
            raise ScenarioError("run.steps must be positive")
        if self.burn_in < 0:
            raise ScenarioError("run.burn_in must be nonnegative")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if self.xhat0 is not None:
            self.xhat0 = np.asarray(self.xhat0, dtype=float)


@dataclass
class Scenario:
    """Complete experiment description."""

    model: PlantModel
    gains: GainSet | None = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    attack: AttackScenario | None = None
    run: RunConfig = field(default_factory=RunConfig)

    def require_gains(self) -> GainSet:
        if self.gains is None:
            raise ScenarioError(
                "scenario has no gains section; run the design command first"
            )
        self.gains.check_compatible(self.model)
        return self.gains

    def attack_or_none(self) -> AttackScenario:
        if self.attack is None:
            return AttackScenario.none(self.model.kappa)
        return self.attack


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ScenarioError(f"{path}.{key} is missing")
    return section[key]


def _as_dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(f"{path} must be a JSON object")
    return value


def _as_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise ScenarioError(f"{path} must be a JSON array")
    return value


def _matrix(value, path: str) -> np.ndarray:
    try:
        out = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path} is not a numeric matrix: {exc}") from exc
    if out.ndim == 1:
        out = out.reshape(1, -1)
    if out.ndim != 2 or out.size == 0:
        raise ScenarioError(f"{path} must be a non-empty 2-D matrix")
    if not np.isfinite(out).all():
        raise ScenarioError(f"{path} contains non-finite entries")
    return out


def _matrix_list(value, path: str) -> list[np.ndarray]:
    items = _as_list(value, path)
    if not items:
        raise ScenarioError(f"{path} must not be empty")
    return [_matrix(item, f"{path}[{idx}]") for idx, item in enumerate(items)]


def _parse_plant(section, path: str) -> PlantModel:
    section = _as_dict(section, path)
    try:
        return PlantModel(
            a=_matrix(_require(section, "a", path), f"{path}.a"),
            b_blocks=_matrix_list(
                _require(section, "b_blocks", path), f"{path}.b_blocks"
            ),
            c_blocks=_matrix_list(
                _require(section, "c_blocks", path), f"{path}.c_blocks"
            ),
            sigma_w=_matrix(_require(section, "sigma_w", path), f"{path}.sigma_w"),
            sigma_z_blocks=_matrix_list(
                _require(section, "sigma_z_blocks", path),
                f"{path}.sigma_z_blocks",
            ),
        )
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _parse_gains(section, path: str) -> GainSet:
    section = _as_dict(section, path)
    try:
        return GainSet(
            k_blocks=_matrix_list(
                _require(section, "k_blocks", path), f"{path}.k_blocks"
            ),
            l_blocks=_matrix_list(
                _require(section, "l_blocks", path), f"{path}.l_blocks"
            ),
            sigma_e_blocks=_matrix_list(
                _require(section, "sigma_e_blocks", path),
                f"{path}.sigma_e_blocks",
            ),
        )
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _parse_attack(section, path: str, kappa: int) -> AttackScenario:
    section = _as_dict(section, path)
    scenario = AttackScenario.none(kappa)
    for idx, entry in enumerate(_as_list(section.get("sensor", []), f"{path}.sensor")):
        entry_path = f"{path}.sensor[{idx}]"
        entry = _as_dict(entry, entry_path)
        i = int(_require(entry, "i", entry_path))
        if not 0 <= i < kappa:
            raise ScenarioError(f"{entry_path}.i out of range for {kappa} subcontrollers")
        scenario.sensor[i] = _matrix(_require(entry, "cov", entry_path), f"{entry_path}.cov")
    for idx, entry in enumerate(_as_list(section.get("comm", []), f"{path}.comm")):
        entry_path = f"{path}.comm[{idx}]"
        entry = _as_dict(entry, entry_path)
        i = int(_require(entry, "i", entry_path))
        j = int(_require(entry, "j", entry_path))
        if not 0 <= i < kappa or not 0 <= j < kappa:
            raise ScenarioError(f"{entry_path}: indices out of range")
        if i == j:
            raise ScenarioError(
                f"{entry_path}: no self-channel exists (i == j == {i})"
            )
        scenario.comm[(i, j)] = _matrix(
            _require(entry, "cov", entry_path), f"{entry_path}.cov"
        )
    return scenario


def _parse_detector(section, path: str) -> DetectorConfig:
    section = _as_dict(section, path)
    known = {
        "window_len",
        "alpha",
        "calibration_windows",
        "coefficient_variant",
        "tau",
    }
    unknown = set(section) - known
    if unknown:
        raise ScenarioError(f"{path} has unknown keys {sorted(unknown)}")
    kwargs = {key: section[key] for key in known & set(section)}
    if kwargs.get("tau") is not None:
        kwargs["tau"] = np.asarray(kwargs["tau"], dtype=float)
    return DetectorConfig(**kwargs)


def _parse_run(section, path: str) -> RunConfig:
    section = _as_dict(section, path)
    known = {"steps", "burn_in", "seed", "x0", "xhat0"}
    unknown = set(section) - known
    if unknown:
        raise ScenarioError(f"{path} has unknown keys {sorted(unknown)}")
    kwargs = {key: section[key] for key in known & set(section)}
    return RunConfig(**kwargs)


def loads_scenario(text: str) -> Scenario:
    """Parse a scenario from a JSON string."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    document = _as_dict(document, "document")
    model = _parse_plant(_require(document, "plant", "document"), "plant")
    gains = None
    if document.get("gains") is not None:
        gains = _parse_gains(document["gains"], "gains")
        try:
            gains.check_compatible(model)
        except ValueError as exc:
            raise ScenarioError(f"gains: {exc}") from exc
    detector = DetectorConfig()
    if document.get("detector") is not None:
        detector = _parse_detector(document["detector"], "detector")
    attack = None
    if document.get("attack") is not None:
        attack = _parse_attack(document["attack"], "attack", model.kappa)
        try:
            attack.check_compatible(model)
        except ValueError as exc:
            raise ScenarioError(f"attack: {exc}") from exc
    run = RunConfig()
    if document.get("run") is not None:
        run = _parse_run(document["run"], "run")
    if run.x0 is not None and run.x0.shape != (model.p,):
        raise ScenarioError(f"run.x0 must have {model.p} entries")
    if run.xhat0 is not None:
        run.xhat0 = np.asarray(run.xhat0, dtype=float)
        if run.xhat0.shape != (model.kappa, model.p):
            raise ScenarioError(
                f"run.xhat0 must be {model.kappa}x{model.p} (one row per observer)"
            )
    return Scenario(model=model, gains=gains, detector=detector, attack=attack, run=run)


def load_scenario(path) -> Scenario:
    """Read and parse a scenario JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return loads_scenario(text)


def _listify(matrix: np.ndarray) -> list:
    return np.asarray(matrix, dtype=float).tolist()


def dumps_scenario(scenario: Scenario) -> str:
    """Serialise a scenario to a JSON string (round-trip exact)."""
    model = scenario.model
    document: dict = {
        "plant": {
            "a": _listify(model.a),
            "b_blocks": [_listify(b) for b in model.b_blocks],
            "c_blocks": [_listify(c) for c in model.c_blocks],
            "sigma_w": _listify(model.sigma_w),
            "sigma_z_blocks": [_listify(s) for s in model.sigma_z_blocks],
        }
    }
    if scenario.gains is not None:
        gains = scenario.gains
        document["gains"] = {
            "k_blocks": [_listify(k) for k in gains.k_blocks],
            "l_blocks": [_listify(lb) for lb in gains.l_blocks],
            "sigma_e_blocks": [_listify(s) for s in gains.sigma_e_blocks],
        }
    detector = scenario.detector
    document["detector"] = {
        "window_len": detector.window_len,
        "alpha": detector.alpha,
        "calibration_windows": detector.calibration_windows,
        "coefficient_variant": detector.coefficient_variant,
        "tau": None if detector.tau is None else detector.tau.tolist(),
    }
    if scenario.attack is not None:
        sensor = [
            {"i": i, "cov": _listify(cov)}
            for i, cov in enumerate(scenario.attack.sensor)
            if cov is not None
        ]
        comm = [
            {"i": i, "j": j, "cov": _listify(cov)}
            for (i, j), cov in sorted(scenario.attack.comm.items())
        ]
        document["attack"] = {"sensor": sensor, "comm": comm}
    run = scenario.run
    document["run"] = {
        "steps": run.steps,
        "burn_in": run.burn_in,
        "seed": run.seed,
        "x0": None if run.x0 is None else run.x0.tolist(),
        "xhat0": None if run.xhat0 is None else run.xhat0.tolist(),
    }
    return json.dumps(document, indent=2) + "\n"


def save_scenario(scenario: Scenario, path) -> None:
    """Write a scenario JSON file."""
    text = dumps_scenario(scenario)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as exc:
        raise ScenarioError(f"cannot write scenario file {path}: {exc}") from exc


def platoon_preset(attack: bool = False, seed: int = 0) -> Scenario:
    """Three-vehicle platoon benchmark with published gains.

    Five states (spacing error and velocity deviation alternating, with
    the lead vehicle's velocity deviation last), three subcontrollers,
    sampling step 1/20 s.  With attack=True the scenario injects a
    variance-0.5 disturbance on subcontroller 1's own sensor and a
    0.2*I covariance disturbance on the channel carrying subcontroller
    3's measurement to subcontroller 2 (0-based: sensor 0, channel
    (1, 2)).
    """
    dt = 1.0 / 20.0
    a = np.array(
        [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [-dt, 1.0, dt, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -dt, 1.0, dt],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )
    half_dt_sq = dt * dt / 2.0
    b_blocks = [
        np.array([[dt], [-half_dt_sq], [0.0], [0.0], [0.0]]),
        np.array([[0.0], [half_dt_sq], [dt], [-half_dt_sq], [0.0]]),
        np.array([[0.0], [0.0], [0.0], [half_dt_sq], [dt]]),
    ]
    c_blocks = [
        np.array([[1.0, 0.0, 0.0, 0.0, 0.0]]),
        np.array([[0.0, 1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0]]),
        np.array([[0.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]]),
    ]
    sigma_w = 5e-5 * np.eye(5)
    sigma_z_blocks = [1e-3 * np.eye(1), 1e-3 * np.eye(2), 1e-3 * np.eye(2)]
    model = PlantModel(
        a=a,
        b_blocks=b_blocks,
        c_blocks=c_blocks,
        sigma_w=sigma_w,
        sigma_z_blocks=sigma_z_blocks,
    )

    k_blocks = [
        np.array([[-1.0, 0.1, 0.0, 0.0, 0.0]]),
        np.array([[1.0, -1.0, -2.0, 0.1, 0.0]]),
        np.array([[0.5, -0.5, 0.5, -1.0, -2.0]]),
    ]
    l_blocks = [
        np.array([[-0.5], [0.0], [0.0], [0.0], [0.0]]),
        np.array(
            [
                [0.05, 0.0],
                [-0.5, 0.0],
                [0.0, -0.5],
                [0.0, 0.0],
                [0.0, 0.0],
            ]
        ),
        np.array(
            [
                [0.0, 0.0],
                [0.0, 0.0],
                [0.05, 0.0],
                [-0.5, 0.0],
                [0.0, -0.5],
            ]
        ),
    ]
    sigma_e_blocks = [np.array([[0.2]])] * 3
    gains = GainSet(
        k_blocks=k_blocks, l_blocks=l_blocks, sigma_e_blocks=sigma_e_blocks
    )

    attack_scenario = None
    if attack:
        attack_scenario = AttackScenario.none(3)
        attack_scenario.sensor[0] = np.array([[0.5]])
        attack_scenario.comm[(1, 2)] = 0.2 * np.eye(2)

    return Scenario(
        model=model,
        gains=gains,
        detector=DetectorConfig(
            window_len=100,
            alpha=0.05,
            calibration_windows=2000,
            coefficient_variant="paper",
        ),
        attack=attack_scenario,
        run=RunConfig(steps=2500, burn_in=500, seed=seed),
    )
