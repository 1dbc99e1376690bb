import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astrolsm import lorenz
from astrolsm.lorenz import (Dataset, IntegrationError, LorenzParams, euler_step,
                             generate_trajectory, make_windows, params_from_offsets,
                             randomize_params)


def rk4_trajectory(params, n):
    """Classical RK4; used only as an independent boundedness reference."""
    s = params.initial_state.astype(float)
    out = np.empty((n, 3))
    h = params.dt
    for k in range(n):
        k1 = lorenz.lorenz_rhs(s, params)
        k2 = lorenz.lorenz_rhs(s + 0.5 * h * k1, params)
        k3 = lorenz.lorenz_rhs(s + 0.5 * h * k2, params)
        k4 = lorenz.lorenz_rhs(s + h * k3, params)
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k] = s
    return out


def test_offsets_zero_gives_base_values():
    p = params_from_offsets(0.0, 0.0, 0.0)
    assert (p.sigma, p.rho, p.delta) == (10.0, 28.0, 2.667)


@pytest.mark.parametrize("seed", range(50))
def test_randomized_ranges(seed):
    p = randomize_params(seed)
    assert 5 <= p.sigma <= 15
    assert 23 <= p.rho <= 33
    assert 2.167 <= p.delta <= 3.167
    assert all(-10 <= v <= 10 for v in (p.x0, p.y0, p.z0))


def test_randomize_deterministic():
    assert randomize_params(7) == randomize_params(7)
    assert randomize_params(7) != randomize_params(8)


def test_euler_origin_fixed():
    p = randomize_params(3)
    assert np.array_equal(euler_step([0.0, 0.0, 0.0], p), np.zeros(3))


@pytest.mark.parametrize("p", [LorenzParams(sigma=10, rho=28, delta=8 / 3),
                               LorenzParams(), randomize_params(11), randomize_params(12)])
def test_euler_nontrivial_equilibrium(p):
    c = math.sqrt(p.delta * (p.rho - 1))
    state = np.array([c, c, p.rho - 1])
    assert np.array_equal(euler_step(state, p), state)


def test_euler_hand_value():
    p = LorenzParams(sigma=10, rho=28, delta=2.667, dt=0.01)
    out = euler_step([1.0, 1.0, 1.0], p)
    # x: 1 + 0.01*0 ; y: 1 + 0.01*(1*27 - 1) ; z: 1 + 0.01*(1 - 2.667)
    np.testing.assert_allclose(out, [1.0, 1.26, 0.98333], rtol=0, atol=1e-14)


def test_euler_overflow_reported():
    p = LorenzParams(dt=1e10)
    with pytest.raises(IntegrationError):
        euler_step([1e200, 1e200, 1e200], p)
    with pytest.raises(IntegrationError):
        euler_step([np.inf, 0, 0], p)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.integers(0, 2 ** 31))
def test_euler_linear_in_dt(state, seed):
    p1 = randomize_params(seed, dt=0.005)
    p2 = randomize_params(seed, dt=0.01)
    s = np.array(state)
    d1 = euler_step(s, p1) - s
    d2 = euler_step(s, p2) - s
    np.testing.assert_allclose(d2, 2 * d1, rtol=1e-9, atol=1e-11)


def test_trajectory_single_step():
    p = LorenzParams(n_steps=1, transient_steps=0, x0=1.0, y0=2.0, z0=3.0)
    traj = generate_trajectory(p)
    assert traj.shape == (1, 3)
    np.testing.assert_array_equal(traj[0], euler_step([1.0, 2.0, 3.0], p))


def test_trajectory_transient_dropped():
    p = LorenzParams(n_steps=20, transient_steps=0)
    long = generate_trajectory(p)
    short = generate_trajectory(LorenzParams(n_steps=10, transient_steps=10))
    np.testing.assert_array_equal(long[10:], short)


def test_trajectory_equilibrium_constant():
    c = math.sqrt(8 / 3 * 27)
    p = LorenzParams(sigma=10, rho=28, delta=8 / 3, n_steps=500, x0=c, y0=c, z0=27.0)
    traj = generate_trajectory(p)
    assert np.all(traj == np.array([c, c, 27.0]))


def test_trajectory_bounded_like_rk4():
    p = LorenzParams(sigma=10, rho=28, delta=8 / 3, n_steps=10_000, transient_steps=0)
    traj = generate_trajectory(p)
    ref = rk4_trajectory(p, 10_000)
    assert np.all(np.isfinite(traj))
    assert np.abs(traj).max() < 100
    assert np.abs(ref).max() < 100


def test_trajectory_divergence_reported():
    p = LorenzParams(dt=5.0, n_steps=200, transient_steps=0)
    with pytest.raises(IntegrationError):
        generate_trajectory(p)


def test_params_validation():
    with pytest.raises(ValueError):
        LorenzParams(dt=0)
    with pytest.raises(ValueError):
        LorenzParams(transient_steps=-1)


# --------------------------------------------------------------------------
# windows


def ramp(n):
    return np.arange(n * 3, dtype=float).reshape(n, 3)


def test_window_count_drops_remainder():
    ds = make_windows(ramp(250), (0.8, 0.1, 0.1))
    assert sum(ds.sizes.values()) == 2


def test_single_window_halves():
    traj = ramp(100)
    ds = make_windows(traj, (0.8, 0.1, 0.1))
    np.testing.assert_array_equal(ds.train_input[0], traj[:50])
    np.testing.assert_array_equal(ds.train_target[0], traj[50:])


def test_split_sizes():
    ds = make_windows(ramp(100 * 100), (0.8, 0.1, 0.1), seed=3)
    assert ds.sizes == {"train": 80, "val": 10, "test": 10}


def test_too_short():
    with pytest.raises(ValueError):
        make_windows(ramp(99))


@pytest.mark.parametrize("fractions", [(0.5, 0.5), (0.8, 0.3, 0.1), (1.0, 0.0, 0.0)])
def test_bad_fractions(fractions):
    with pytest.raises(ValueError):
        make_windows(ramp(1000), fractions)


def test_windows_tile_without_overlap():
    trajs = [ramp(730), ramp(420) + 1e4]
    ds = make_windows(trajs, (0.6, 0.2, 0.2), seed=5)
    origins = np.concatenate([ds.origin_train, ds.origin_val, ds.origin_test])
    assert len(origins) == 7 + 4
    seen = set()
    for (traj_id, start) in origins:
        assert start % 100 == 0
        rows = {(traj_id, r) for r in range(start, start + 100)}
        assert not rows & seen
        seen |= rows
    for name in lorenz.SPLITS:
        x, y = ds.split(name)
        for (traj_id, start), xi, yi in zip(getattr(ds, f"origin_{name}"), x, y):
            src = trajs[traj_id]
            np.testing.assert_array_equal(xi, src[start:start + 50])
            np.testing.assert_array_equal(yi, src[start + 50:start + 100])


def test_shuffle_deterministic():
    a = make_windows(ramp(2000), seed=1)
    b = make_windows(ramp(2000), seed=1)
    c = make_windows(ramp(2000), seed=2)
    np.testing.assert_array_equal(a.origin_train, b.origin_train)
    assert not np.array_equal(a.origin_train, c.origin_train)


def test_normalization_from_train_inputs():
    ds = lorenz.generate_dataset(seed=0, n_trajectories=2, windows_per_trajectory=20)
    flat = ds.train_input.reshape(-1, 3)
    np.testing.assert_allclose(ds.mean, flat.mean(axis=0))
    np.testing.assert_allclose(ds.std, flat.std(axis=0))
    assert np.all(ds.std > 0)


def test_constant_dimension_gets_unit_std():
    traj = ramp(300)
    traj[:, 2] = 4.0
    ds = make_windows(traj, (0.4, 0.3, 0.3))
    assert ds.std[2] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_normalize_roundtrip(seed):
    ds = lorenz.generate_dataset(seed=seed, n_trajectories=1, windows_per_trajectory=5,
                                 transient_steps=100)
    x = ds.train_input
    back = ds.denormalize(ds.normalize(x))
    # relative to the array's magnitude; entries that pass near zero make elementwise ratios meaningless
    assert np.max(np.abs(back - x)) / np.max(np.abs(x)) < 1e-12


def test_dataset_roundtrip(tmp_path):
    ds = lorenz.generate_dataset(seed=4, n_trajectories=2, windows_per_trajectory=15)
    ds.save(tmp_path / "dataset")
    back = Dataset.load(tmp_path / "dataset.json")
    for name in lorenz.SPLITS:
        for a, b in zip(ds.split(name), back.split(name)):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(getattr(ds, f"origin_{name}"), getattr(back, f"origin_{name}"))
    np.testing.assert_array_equal(ds.mean, back.mean)
    assert back.meta["split_sizes"] == ds.sizes
    assert len(back.meta["params"]) == 2


def test_generate_dataset_deterministic():
    a = lorenz.generate_dataset(seed=9, n_trajectories=2, windows_per_trajectory=10)
    b = lorenz.generate_dataset(seed=9, n_trajectories=2, windows_per_trajectory=10)
    np.testing.assert_array_equal(a.train_input, b.train_input)
    assert np.all(np.isfinite(a.train_input))
