"""Randomised Lorenz trajectories and 50/50 prediction windows."""
from dataclasses import asdict, dataclass, field
from typing import List, Tuple

import numpy as np

from . import _kernels
from .persist import load_bundle, save_bundle

WINDOW = 100
HALF = WINDOW // 2
BASE_SIGMA, BASE_RHO, BASE_DELTA = 10.0, 28.0, 2.667
SIGMA_SPREAD, RHO_SPREAD, DELTA_SPREAD = 5.0, 5.0, 0.5


class IntegrationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = BASE_SIGMA
    rho: float = BASE_RHO
    delta: float = BASE_DELTA
    dt: float = 0.01
    n_steps: int = 10_000
    x0: float = 1.0
    y0: float = 1.0
    z0: float = 1.0
    transient_steps: int = 1000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be positive, got {self.n_steps}")
        if self.transient_steps < 0:
            raise ValueError(f"transient_steps must be non-negative, got {self.transient_steps}")

    @property
    def initial_state(self):
        return np.array([self.x0, self.y0, self.z0])


def params_from_offsets(d_sigma, d_rho, d_delta, **kw) -> LorenzParams:
    return LorenzParams(sigma=BASE_SIGMA + d_sigma, rho=BASE_RHO + d_rho,
                        delta=BASE_DELTA + d_delta, **kw)


def randomize_params(seed, n_steps=10_000, dt=0.01, transient_steps=1000,
                     init_range=10.0) -> LorenzParams:
    """sigma, rho jittered by U(-5, 5) and delta by U(-0.5, 0.5) around 10, 28, 2.667.

    The initial state is drawn uniformly from [-init_range, init_range]^3.
    """
    rng = np.random.default_rng(seed)
    d_sigma = rng.uniform(-SIGMA_SPREAD, SIGMA_SPREAD)
    d_rho = rng.uniform(-RHO_SPREAD, RHO_SPREAD)
    d_delta = rng.uniform(-DELTA_SPREAD, DELTA_SPREAD)
    x0, y0, z0 = rng.uniform(-init_range, init_range, size=3)
    return params_from_offsets(d_sigma, d_rho, d_delta, dt=dt, n_steps=n_steps,
                               x0=float(x0), y0=float(y0), z0=float(z0),
                               transient_steps=transient_steps)


def lorenz_rhs(state, params):
    x, y, z = state
    return np.array([params.sigma * (y - x),
                     x * (params.rho - z) - y,
                     x * y - params.delta * z])


def euler_step(state, params: LorenzParams):
    state = np.asarray(state, dtype=np.float64)
    if not np.all(np.isfinite(state)):
        raise IntegrationError("state is not finite")
    x, y, z = state
    dt = params.dt
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.array([x + dt * (params.sigma * (y - x)),
                        y + dt * (x * (params.rho - z) - y),
                        z + dt * (x * y - params.delta * z)])
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"Euler step overflowed from state {state.tolist()}")
    return out


def generate_trajectory(params: LorenzParams):
    """Euler-integrate from the initial state; drop the transient, keep ``n_steps`` rows."""
    total = params.transient_steps + params.n_steps
    traj = _kernels.integrate_euler(params.x0, params.y0, params.z0, params.sigma,
                                    params.rho, params.delta, params.dt, total)
    traj = traj[params.transient_steps:]
    if not np.all(np.isfinite(traj)):
        raise IntegrationError(f"trajectory diverged for {params}")
    return traj


# --------------------------------------------------------------------------
# windows and datasets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowPair:
    input: np.ndarray
    target: np.ndarray


SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    """Windows stacked as (k, 50, 3) arrays per split, plus train-input normalisation.

    ``origin_*`` rows are ``(trajectory index, first row of the window)``.
    """
    train_input: np.ndarray
    train_target: np.ndarray
    val_input: np.ndarray
    val_target: np.ndarray
    test_input: np.ndarray
    test_target: np.ndarray
    origin_train: np.ndarray
    origin_val: np.ndarray
    origin_test: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    meta: dict = field(default_factory=dict)

    def split(self, name) -> Tuple[np.ndarray, np.ndarray]:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, f"{name}_input"), getattr(self, f"{name}_target")

    def windows(self, name) -> List[WindowPair]:
        x, y = self.split(name)
        return [WindowPair(a, b) for a, b in zip(x, y)]

    @property
    def sizes(self):
        return {name: int(self.split(name)[0].shape[0]) for name in SPLITS}

    def normalize(self, arr):
        return (np.asarray(arr) - self.mean) / self.std

    def denormalize(self, arr):
        return np.asarray(arr) * self.std + self.mean

    def save(self, stem):
        arrays = {}
        for name in SPLITS:
            x, y = self.split(name)
            arrays[f"{name}_input"] = x
            arrays[f"{name}_target"] = y
            arrays[f"origin_{name}"] = getattr(self, f"origin_{name}")
        arrays["mean"] = self.mean
        arrays["std"] = self.std
        meta = dict(self.meta)
        meta["split_sizes"] = self.sizes
        meta["normalization"] = {"mean": self.mean.tolist(), "std": self.std.tolist(),
                                 "computed_from": "train inputs, per dimension"}
        meta["window"] = {"length": WINDOW, "input_rows": HALF, "target_rows": HALF,
                          "columns": ["x", "y", "z"]}
        return save_bundle(stem, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_bundle(path)
        kw = {k: arrays[k] for k in arrays}
        for name in SPLITS:
            kw[f"origin_{name}"] = kw[f"origin_{name}"].astype(np.int64)
        return cls(meta=meta, **kw)


def window_trajectory(trajectory):
    """Cut non-overlapping 100-row windows; the trailing remainder is dropped."""
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.ndim != 2 or trajectory.shape[1] != 3:
        raise ValueError(f"trajectory must be (T, 3), got {trajectory.shape}")
    k = trajectory.shape[0] // WINDOW
    if k == 0:
        raise ValueError(f"trajectory has {trajectory.shape[0]} rows, need at least {WINDOW}")
    blocks = trajectory[:k * WINDOW].reshape(k, WINDOW, 3)
    starts = np.arange(k) * WINDOW
    return blocks[:, :HALF].copy(), blocks[:, HALF:].copy(), starts


def split_sizes(n, fractions):
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    n_test = n - n_train - n_val
    if n_train < 1:
        raise ValueError(f"{n} windows leave no training data with fractions {fractions}")
    return n_train, n_val, n_test


def make_windows(trajectories, split_fractions=(0.8, 0.1, 0.1), seed=0, meta=None) -> Dataset:
    """Window one trajectory (T, 3) or a sequence of them, shuffle with ``seed`` and split."""
    if isinstance(trajectories, np.ndarray) and trajectories.ndim == 2:
        trajectories = [trajectories]
    inputs, targets, origins = [], [], []
    for i, traj in enumerate(trajectories):
        x, y, starts = window_trajectory(traj)
        inputs.append(x)
        targets.append(y)
        origins.append(np.column_stack([np.full(len(starts), i), starts]))
    inputs = np.concatenate(inputs)
    targets = np.concatenate(targets)
    origins = np.concatenate(origins).astype(np.int64)
    n = inputs.shape[0]
    n_train, n_val, _ = split_sizes(n, split_fractions)
    order = np.random.default_rng(seed).permutation(n)
    parts = np.split(order, [n_train, n_train + n_val])

    train_x = inputs[parts[0]]
    mean = train_x.reshape(-1, 3).mean(axis=0)
    std = train_x.reshape(-1, 3).std(axis=0)
    std = np.where(std > 0, std, 1.0)
    meta = dict(meta or {})
    meta.update(split_fractions=list(split_fractions), shuffle_seed=seed)
    return Dataset(
        train_input=train_x, train_target=targets[parts[0]],
        val_input=inputs[parts[1]], val_target=targets[parts[1]],
        test_input=inputs[parts[2]], test_target=targets[parts[2]],
        origin_train=origins[parts[0]], origin_val=origins[parts[1]],
        origin_test=origins[parts[2]], mean=mean, std=std, meta=meta)


def trajectory_seeds(seed, n_trajectories):
    ss = np.random.SeedSequence(seed)
    return [int(child.generate_state(1)[0]) for child in ss.spawn(n_trajectories)]


def generate_dataset(seed=0, n_trajectories=20, windows_per_trajectory=500, dt=0.01,
                     transient_steps=1000, init_range=10.0,
                     split_fractions=(0.8, 0.1, 0.1)) -> Dataset:
    """One randomised parameter set per trajectory; windows pooled across trajectories."""
    seeds = trajectory_seeds(seed, n_trajectories)
    trajectories, params = [], []
    for s in seeds:
        p = randomize_params(s, n_steps=windows_per_trajectory * WINDOW, dt=dt,
                             transient_steps=transient_steps, init_range=init_range)
        trajectories.append(generate_trajectory(p))
        params.append(asdict(p))
    meta = {"seed": seed, "trajectory_seeds": seeds, "params": params}
    return make_windows(trajectories, split_fractions, seed=seed, meta=meta)
