import numpy as np
import pytest
from numpy.testing import assert_allclose

from netwatermark import (
    AttackScenario,
    DivergenceError,
    GainSet,
    InputError,
    PlantModel,
    available_kernels,
    derived_delta,
    empirical_covariance,
    simulate,
    spectral_radius,
    write_trace_csv,
)


def platoon_attack():
    attack = AttackScenario.none(3)
    attack.sensor[0] = np.array([[0.5]])
    attack.comm[(1, 2)] = 0.2 * np.eye(2)
    return attack


def zero_noise_variant(model, gains):
    quiet_model = PlantModel(
        a=model.a,
        b_blocks=list(model.b_blocks),
        c_blocks=list(model.c_blocks),
        sigma_w=np.zeros_like(model.sigma_w),
        sigma_z_blocks=[np.zeros_like(s) for s in model.sigma_z_blocks],
    )
    quiet_gains = GainSet(
        k_blocks=list(gains.k_blocks),
        l_blocks=list(gains.l_blocks),
        sigma_e_blocks=[np.zeros_like(s) for s in gains.sigma_e_blocks],
    )
    return quiet_model, quiet_gains


def test_recorded_trace_satisfies_recursions(platoon_model, platoon_gains):
    model, gains = platoon_model, platoon_gains
    trace = simulate(model, gains, platoon_attack(), steps=200, seed=5)
    a, b, c = model.a, model.b, model.c
    k, l = gains.k, gains.l
    observer = a + b @ k + l @ c
    worst = 0.0
    for n in range(199):
        y = c @ trace.x[n] + trace.z[n] + trace.v[n]
        worst = max(worst, np.abs(y - trace.y[n]).max())
        u = np.concatenate(
            [
                gains.k_blocks[i] @ trace.xhat[n, i]
                + trace.e_block(i)[n]
                for i in range(3)
            ]
        )
        worst = max(worst, np.abs(u - trace.u[n]).max())
        x_next = a @ trace.x[n] + b @ trace.u[n] + trace.w[n]
        worst = max(worst, np.abs(x_next - trace.x[n + 1]).max())
        for i in range(3):
            s_row = trace.y[n] + trace.nu[n, i]
            worst = max(worst, np.abs(s_row - trace.s[n, i]).max())
            xhat_next = (
                observer @ trace.xhat[n, i]
                - l @ trace.s[n, i]
                + model.b_blocks[i] @ trace.e_block(i)[n]
            )
            worst = max(worst, np.abs(xhat_next - trace.xhat[n + 1, i]).max())
    assert worst <= 1e-10


def test_identical_seeds_reproduce_trace(platoon_model, platoon_gains):
    first = simulate(platoon_model, platoon_gains, steps=300, seed=17)
    second = simulate(platoon_model, platoon_gains, steps=300, seed=17)
    for name in ("x", "xhat", "y", "s", "u", "w", "z", "e", "v", "nu"):
        assert np.array_equal(getattr(first, name), getattr(second, name))


def test_zero_covariance_attack_matches_no_attack(platoon_model, platoon_gains):
    quiet = AttackScenario.none(3)
    quiet.sensor[0] = np.zeros((1, 1))
    quiet.comm[(1, 2)] = np.zeros((2, 2))
    plain = simulate(platoon_model, platoon_gains, steps=250, seed=9)
    attacked = simulate(platoon_model, platoon_gains, quiet, steps=250, seed=9)
    for name in ("x", "xhat", "y", "s", "u", "v", "nu"):
        assert np.array_equal(getattr(plain, name), getattr(attacked, name))


def test_attack_draws_leave_plant_noise_streams_alone(platoon_model, platoon_gains):
    plain = simulate(platoon_model, platoon_gains, steps=250, seed=31)
    attacked = simulate(
        platoon_model, platoon_gains, platoon_attack(), steps=250, seed=31
    )
    assert np.array_equal(plain.w, attacked.w)
    assert np.array_equal(plain.z, attacked.z)
    assert np.array_equal(plain.e, attacked.e)
    assert not np.array_equal(plain.x, attacked.x)


def test_quiet_loop_at_equilibrium_stays_zero(platoon_model, platoon_gains):
    model, gains = zero_noise_variant(platoon_model, platoon_gains)
    trace = simulate(model, gains, steps=50, seed=0)
    assert np.abs(trace.x).max() == 0.0
    assert np.abs(trace.xhat).max() == 0.0
    assert np.abs(trace.u).max() == 0.0


def fitted_log_slope(norms, first, last):
    steps = np.arange(first, last)
    return np.polyfit(steps, np.log(norms[first:last]), 1)[0]


def test_quiet_loop_observer_error_decay(platoon_model, platoon_gains):
    model, gains = zero_noise_variant(platoon_model, platoon_gains)
    xhat0 = np.tile([0.7, -0.3, 0.4, 0.1, -0.2], (3, 1))
    trace = simulate(model, gains, steps=600, seed=0, xhat0=xhat0)
    spread = trace.xhat - trace.xhat[:, :1]
    assert np.abs(spread).max() == 0.0
    delta = trace.xhat[:, 0] - trace.x
    norms = np.linalg.norm(delta, axis=1)
    # past ~n=55 the subtraction xhat - x is dominated by cancellation
    # noise at the ulp of x, so fit the clean exponential range only
    slope = fitted_log_slope(norms, 10, 55)
    rho = spectral_radius(model.a + gains.l @ model.c)
    assert slope == pytest.approx(np.log(rho), rel=0.05)
    assert np.linalg.norm(trace.x[-1]) <= 1e-8


def test_quiet_loop_observer_disagreement_decay(platoon_model, platoon_gains):
    model, gains = zero_noise_variant(platoon_model, platoon_gains)
    rng = np.random.default_rng(12)
    xhat0 = rng.normal(size=(3, 5))
    trace = simulate(model, gains, steps=200, seed=0, xhat0=xhat0)
    disagreement = np.linalg.norm(trace.xhat[:, 1] - trace.xhat[:, 0], axis=1)
    slope = fitted_log_slope(disagreement, 10, 60)
    rho = spectral_radius(model.a + model.b @ gains.k + gains.l @ model.c)
    assert slope == pytest.approx(np.log(rho), rel=0.05)


def test_divergence_reports_step():
    model = PlantModel(
        a=np.array([[2.0]]),
        b_blocks=[np.array([[1.0]])],
        c_blocks=[np.array([[1.0]])],
        sigma_w=np.zeros((1, 1)),
        sigma_z_blocks=[np.zeros((1, 1))],
    )
    gains = GainSet(
        k_blocks=[np.zeros((1, 1))],
        l_blocks=[np.zeros((1, 1))],
        sigma_e_blocks=[np.zeros((1, 1))],
    )
    with pytest.raises(DivergenceError) as err:
        simulate(model, gains, steps=100, seed=0, x0=np.array([1.0]))
    assert err.value.step == 40


def test_kernels_agree(platoon_model, platoon_gains):
    kernels = available_kernels()
    if "compiled" not in kernels:
        pytest.skip("compiled kernel not built")
    fast = simulate(
        platoon_model, platoon_gains, platoon_attack(), steps=400, seed=21,
        kernel="compiled",
    )
    slow = simulate(
        platoon_model, platoon_gains, platoon_attack(), steps=400, seed=21,
        kernel="python",
    )
    assert np.array_equal(fast.w, slow.w)
    for name in ("x", "xhat", "y", "s", "u"):
        assert_allclose(
            getattr(fast, name), getattr(slow, name), rtol=1e-9, atol=1e-12
        )


def test_unknown_kernel_rejected(platoon_model, platoon_gains):
    with pytest.raises(InputError):
        simulate(platoon_model, platoon_gains, steps=10, seed=0, kernel="gpu")


def test_trace_block_accessors(platoon_model, platoon_gains):
    trace = simulate(platoon_model, platoon_gains, steps=40, seed=2)
    assert trace.steps == 40
    assert_allclose(trace.y_block(1), trace.y[:, 1:3])
    assert_allclose(trace.s_block(2, 1), trace.s[:, 2, 1:3])
    assert_allclose(trace.e_block(2), trace.e[:, 2:3])
    assert_allclose(trace.u_block(0), trace.u[:, 0:1])
    assert_allclose(trace.xhat_block(1), trace.xhat[:, 1])


def test_trace_csv_header_and_round_trip(tmp_path, scalar_loop):
    model, gains = scalar_loop
    trace = simulate(model, gains, steps=5, seed=3)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x[0],xhat0[0],y0[0],s00[0],e0[0],u0[0]"
    assert len(lines) == 6
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], trace.x[:, 0])
    assert np.array_equal(data[:, 1], trace.xhat[:, 0, 0])
    assert np.array_equal(data[:, 2], trace.y[:, 0])
    assert np.array_equal(data[:, 3], trace.s[:, 0, 0])
    assert np.array_equal(data[:, 4], trace.e[:, 0])
    assert np.array_equal(data[:, 5], trace.u[:, 0])


def test_trace_csv_platoon_column_order(tmp_path, platoon_model, platoon_gains):
    trace = simulate(platoon_model, platoon_gains, steps=3, seed=4)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:5] == ["x[0]", "x[1]", "x[2]", "x[3]", "x[4]"]
    assert header[5] == "xhat0[0]"
    assert header[20] == "y0[0]"
    assert header[25] == "s00[0]"
    s_cols = [name for name in header if name.startswith("s")]
    assert s_cols[:6] == ["s00[0]", "s01[0]", "s01[1]", "s02[0]", "s02[1]", "s10[0]"]
    assert header[-1] == "u2[0]"
    assert len(header) == 5 + 15 + 5 + 15 + 3 + 3


def test_trace_csv_is_byte_deterministic(tmp_path, platoon_model, platoon_gains):
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    write_trace_csv(simulate(platoon_model, platoon_gains, steps=50, seed=6), first)
    write_trace_csv(simulate(platoon_model, platoon_gains, steps=50, seed=6), second)
    assert first.read_bytes() == second.read_bytes()


def test_derived_delta_matches_definition(platoon_model, platoon_gains):
    trace = simulate(platoon_model, platoon_gains, steps=30, seed=8)
    delta = derived_delta(trace)
    assert delta.shape == (30, 15)
    manual = np.concatenate(
        [trace.xhat[:, i] - trace.x for i in range(3)], axis=1
    )
    assert np.array_equal(delta, manual)


def test_derived_delta_zero_when_estimates_exact(scalar_loop):
    model, gains = zero_noise_variant(*scalar_loop)
    trace = simulate(model, gains, steps=20, seed=0)
    assert np.abs(derived_delta(trace)).max() == 0.0


def test_empirical_covariance_examples():
    c = np.array([1.0, -2.0])
    constant = np.tile(c, (7, 1))
    assert_allclose(empirical_covariance(constant), np.outer(c, c), rtol=1e-14)
    flipped = np.vstack([c, -c, c, -c])
    assert_allclose(empirical_covariance(flipped), np.outer(c, c), rtol=1e-14)
    with pytest.raises(InputError):
        empirical_covariance(np.empty((0, 2)))


def test_empirical_covariance_matches_sampler():
    rng = np.random.default_rng(44)
    cov = np.array([[2.0, 0.7], [0.7, 1.0]])
    samples = rng.multivariate_normal(np.zeros(2), cov, size=200_000)
    estimate = empirical_covariance(samples)
    assert np.linalg.norm(estimate - cov) <= 0.05 * np.linalg.norm(cov)


def test_attack_scenario_validation(platoon_model):
    attack = AttackScenario.none(3)
    attack.comm[(1, 1)] = np.eye(2)
    with pytest.raises(InputError):
        attack.check_compatible(platoon_model)
    bad_size = AttackScenario.none(3)
    bad_size.sensor[0] = np.eye(2)
    with pytest.raises(Exception):
        bad_size.check_compatible(platoon_model)


def test_simulate_rejects_bad_initial_conditions(platoon_model, platoon_gains):
    with pytest.raises(Exception):
        simulate(platoon_model, platoon_gains, steps=10, seed=0, x0=np.ones(3))
