import numpy as np
import pytest

from netwatermark import GainSet, PlantModel, platoon_preset


@pytest.fixture(scope="session")
def platoon():
    """Three-vehicle platoon benchmark scenario with published gains."""
    return platoon_preset()


@pytest.fixture(scope="session")
def platoon_model(platoon):
    return platoon.model


@pytest.fixture(scope="session")
def platoon_gains(platoon):
    return platoon.gains


@pytest.fixture()
def two_agent_model():
    """Two subcontrollers sharing a double integrator.

    (A, B_1) alone is not stabilizable and (A, C_2) alone is not
    detectable, so the agents must cooperate; the fixture is the
    standard hard case for watermark reachability.
    """
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    return PlantModel(
        a=a,
        b_blocks=[np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])],
        c_blocks=[np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])],
        sigma_w=0.01 * np.eye(2),
        sigma_z_blocks=[0.01 * np.eye(1), 0.01 * np.eye(1)],
    )


@pytest.fixture()
def scalar_loop():
    """Single scalar subcontroller with known stationary error variance."""
    model = PlantModel(
        a=np.array([[0.5]]),
        b_blocks=[np.array([[1.0]])],
        c_blocks=[np.array([[1.0]])],
        sigma_w=np.array([[0.15]]),
        sigma_z_blocks=[np.array([[0.16]])],
    )
    gains = GainSet(
        k_blocks=[np.array([[-0.25]])],
        l_blocks=[np.array([[-0.25]])],
        sigma_e_blocks=[np.array([[0.3]])],
    )
    return model, gains
