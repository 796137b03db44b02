"""Plant and gain containers for networked LTI control loops.

A plant is a single linear system x' = A x + sum_i B_i u_i + w shared by
kappa subcontrollers; subcontroller i actuates through B_i and measures
y_i = C_i x + z_i.  Every subcontroller broadcasts its measurement to all
others, runs a full-state observer on the stacked measurement vector, and
applies u_i = K_i xhat_i + e_i where e_i is its private watermark signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionError, InputError
from .linalg import as_matrix, symmetrize

__all__ = ["PlantModel", "GainSet"]


def _check_covariance(m, name: str, size: int, psd_tol: float = 1e-10) -> np.ndarray:
    arr = as_matrix(m, name, square=True)
    if arr.shape[0] != size:
        raise DimensionError(f"{name} must be {size}x{size}, got {arr.shape}")
    scale = 1.0 + np.abs(arr).max()
    if np.abs(arr - arr.T).max() > 1e-8 * scale:
        raise InputError(f"{name} is asymmetric beyond round-off")
    arr = symmetrize(arr)
    if np.linalg.eigvalsh(arr).min() < -psd_tol * scale:
        raise InputError(f"{name} is not positive semidefinite")
    return arr


@dataclass
class PlantModel:
    """Shared plant plus the per-subcontroller actuation/sensing split.

    a
        State transition matrix, p x p.
    b_blocks
        Input matrices per subcontroller, each p x q_i.
    c_blocks
        Output matrices per subcontroller, each m_i x p.
    sigma_w
        Process noise covariance, p x p.
    sigma_z_blocks
        Measurement noise covariances per subcontroller, each m_i x m_i.
    """

    a: np.ndarray
    b_blocks: list[np.ndarray]
    c_blocks: list[np.ndarray]
    sigma_w: np.ndarray
    sigma_z_blocks: list[np.ndarray]

    def __post_init__(self):
        self.a = as_matrix(self.a, "a", square=True)
        p = self.a.shape[0]
        if not self.b_blocks:
            raise InputError("at least one subcontroller is required")
        if not (len(self.b_blocks) == len(self.c_blocks) == len(self.sigma_z_blocks)):
            raise DimensionError(
                "b_blocks, c_blocks and sigma_z_blocks must have equal lengths"
            )
        self.b_blocks = [
            as_matrix(b, f"b_blocks[{i}]") for i, b in enumerate(self.b_blocks)
        ]
        self.c_blocks = [
            as_matrix(c, f"c_blocks[{i}]") for i, c in enumerate(self.c_blocks)
        ]
        for i, b in enumerate(self.b_blocks):
            if b.shape[0] != p:
                raise DimensionError(
                    f"b_blocks[{i}] must have {p} rows, got {b.shape[0]}"
                )
        for i, c in enumerate(self.c_blocks):
            if c.shape[1] != p:
                raise DimensionError(
                    f"c_blocks[{i}] must have {p} columns, got {c.shape[1]}"
                )
        self.sigma_w = _check_covariance(self.sigma_w, "sigma_w", p)
        self.sigma_z_blocks = [
            _check_covariance(s, f"sigma_z_blocks[{i}]", self.c_blocks[i].shape[0])
            for i, s in enumerate(self.sigma_z_blocks)
        ]

    @property
    def p(self) -> int:
        return self.a.shape[0]

    @property
    def kappa(self) -> int:
        return len(self.b_blocks)

    @property
    def q_sizes(self) -> list[int]:
        return [b.shape[1] for b in self.b_blocks]

    @property
    def m_sizes(self) -> list[int]:
        return [c.shape[0] for c in self.c_blocks]

    @property
    def q_total(self) -> int:
        return sum(self.q_sizes)

    @property
    def m_total(self) -> int:
        return sum(self.m_sizes)

    @property
    def q_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.q_sizes)])

    @property
    def m_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.m_sizes)])

    @property
    def b(self) -> np.ndarray:
        """All input blocks stacked horizontally, p x q_total."""
        return np.hstack(self.b_blocks)

    @property
    def c(self) -> np.ndarray:
        """All output blocks stacked vertically, m_total x p."""
        return np.vstack(self.c_blocks)

    @property
    def sigma_z(self) -> np.ndarray:
        """Block-diagonal measurement noise covariance, m_total square."""
        return block_diag(*self.sigma_z_blocks)


@dataclass
class GainSet:
    """Per-subcontroller feedback gains, observer gains and watermark covariances.

    k_blocks
        Feedback gains, each q_i x p; the stacked control is u = K xhat.
    l_blocks
        Observer gains, each p x m_i, in the convention where the observer
        transition is A + B K + L C (so stabilizing gains are "negative").
    sigma_e_blocks
        Watermark covariances, each q_i x q_i, positive semidefinite.
    """

    k_blocks: list[np.ndarray]
    l_blocks: list[np.ndarray]
    sigma_e_blocks: list[np.ndarray]

    def __post_init__(self):
        if not self.k_blocks:
            raise InputError("at least one subcontroller is required")
        if not (len(self.k_blocks) == len(self.l_blocks) == len(self.sigma_e_blocks)):
            raise DimensionError(
                "k_blocks, l_blocks and sigma_e_blocks must have equal lengths"
            )
        self.k_blocks = [
            as_matrix(k, f"k_blocks[{i}]") for i, k in enumerate(self.k_blocks)
        ]
        self.l_blocks = [
            as_matrix(lb, f"l_blocks[{i}]") for i, lb in enumerate(self.l_blocks)
        ]
        p = self.k_blocks[0].shape[1]
        for i, kb in enumerate(self.k_blocks):
            if kb.shape[1] != p:
                raise DimensionError(
                    f"k_blocks[{i}] must have {p} columns, got {kb.shape[1]}"
                )
        for i, lb in enumerate(self.l_blocks):
            if lb.shape[0] != p:
                raise DimensionError(
                    f"l_blocks[{i}] must have {p} rows, got {lb.shape[0]}"
                )
        self.sigma_e_blocks = [
            _check_covariance(s, f"sigma_e_blocks[{i}]", self.k_blocks[i].shape[0])
            for i, s in enumerate(self.sigma_e_blocks)
        ]

    @property
    def kappa(self) -> int:
        return len(self.k_blocks)

    @property
    def k(self) -> np.ndarray:
        """Feedback blocks stacked vertically, q_total x p."""
        return np.vstack(self.k_blocks)

    @property
    def l(self) -> np.ndarray:
        """Observer blocks stacked horizontally, p x m_total."""
        return np.hstack(self.l_blocks)

    @property
    def sigma_e(self) -> np.ndarray:
        """Block-diagonal watermark covariance, q_total square."""
        return block_diag(*self.sigma_e_blocks)

    def check_compatible(self, model: PlantModel) -> None:
        """Raise DimensionError when the gains do not fit the plant."""
        if self.kappa != model.kappa:
            raise DimensionError(
                f"gain set has {self.kappa} subcontrollers, plant has "
                f"{model.kappa}"
            )
        for i in range(self.kappa):
            qi = model.q_sizes[i]
            mi = model.m_sizes[i]
            if self.k_blocks[i].shape != (qi, model.p):
                raise DimensionError(
                    f"k_blocks[{i}] must be {qi}x{model.p}, got "
                    f"{self.k_blocks[i].shape}"
                )
            if self.l_blocks[i].shape != (model.p, mi):
                raise DimensionError(
                    f"l_blocks[{i}] must be {model.p}x{mi}, got "
                    f"{self.l_blocks[i].shape}"
                )
