"""Four-subnetwork tripartite reservoir.

Two neuron subnetworks (n1, n2) and two astrocyte subnetworks (a1, a2), each
all-to-all recurrent.  Cross wiring:

    n1 -> n2, n2 -> n1          neuron <-> neuron
    n1 -> a1, n2 -> a2          neuron -> astrocyte
    a1 -> n2, a2 -> n1          astrocyte -> the *other* neuron subnet

The flattened 50x3 window enters n1 only, through ``W_in``.  Readout features
are the spike rates of n1 and n2 over ``presentations`` synchronous steps.
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Dict

import numpy as np

from . import _kernels
from .persist import load_bundle, save_bundle
from .units import AstrocyteConfig, NeuronConfig, UnitState, astrocyte_step, neuron_step

INPUT_DIM = 150

# (name, presynaptic group, postsynaptic group); matrices are stored (post, pre)
BLOCKS = (
    ("W_in", "input", "n1"),
    ("W_n1n1", "n1", "n1"),
    ("W_n2n2", "n2", "n2"),
    ("W_n1n2", "n1", "n2"),
    ("W_n2n1", "n2", "n1"),
    ("W_n1a1", "n1", "a1"),
    ("W_n2a2", "n2", "a2"),
    ("W_a1n2", "a1", "n2"),
    ("W_a2n1", "a2", "n1"),
    ("W_a1a1", "a1", "a1"),
    ("W_a2a2", "a2", "a2"),
)
RECURRENT = ("W_n1n1", "W_n2n2", "W_a1a1", "W_a2a2")
# kernel argument order (everything but W_in)
KERNEL_ORDER = ("W_n1n1", "W_n2n2", "W_n1n2", "W_n2n1", "W_n1a1", "W_n2a2",
                "W_a1n2", "W_a2n1", "W_a1a1", "W_a2a2")


class ReservoirDivergence(ArithmeticError):
    pass


@dataclass(frozen=True)
class ReservoirSpec:
    n_neurons: int
    n_astrocytes: int
    presentations: int = 30
    weight_scale: float = 1.0
    seed: int = 0
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    astrocyte: AstrocyteConfig = field(default_factory=AstrocyteConfig)
    self_connections: bool = True
    # "total": N is split across both neuron subnets; "per_subnet": each subnet has N units
    size_mode: str = "total"
    input_every_step: bool = True

    def __post_init__(self):
        if self.size_mode not in ("total", "per_subnet"):
            raise ValueError(f"size_mode must be 'total' or 'per_subnet', got {self.size_mode!r}")
        minimum = 2 if self.size_mode == "total" else 1
        if self.n_neurons < minimum or self.n_astrocytes < minimum:
            raise ValueError(f"need at least {minimum} neurons and astrocytes "
                             f"(got N={self.n_neurons}, A={self.n_astrocytes})")
        if self.presentations < 1:
            raise ValueError("presentations must be >= 1")
        if not self.weight_scale > 0:
            raise ValueError("weight_scale must be positive")

    def subnet_sizes(self) -> Dict[str, int]:
        if self.size_mode == "per_subnet":
            return {"n1": self.n_neurons, "n2": self.n_neurons,
                    "a1": self.n_astrocytes, "a2": self.n_astrocytes}
        return {"n1": -(-self.n_neurons // 2), "n2": self.n_neurons // 2,
                "a1": -(-self.n_astrocytes // 2), "a2": self.n_astrocytes // 2}

    @property
    def feature_dim(self):
        sizes = self.subnet_sizes()
        return sizes["n1"] + sizes["n2"]

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ReservoirWeights:
    blocks: Dict[str, np.ndarray]

    def __getitem__(self, name):
        return self.blocks[name]

    def weight_count(self):
        return sum(w.size for w in self.blocks.values())

    def save(self, stem, spec: ReservoirSpec):
        meta = {"spec": spec.to_dict(), "spec_hash": spec.digest(), "seed": spec.seed,
                "convention": "each block is (postsynaptic, presynaptic); current = W @ spikes"}
        return save_bundle(stem, dict(self.blocks), meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_bundle(path)
        return cls(_freeze(arrays)), meta


def _freeze(arrays):
    out = {}
    for name, _, _ in BLOCKS:
        w = np.array(arrays[name], dtype=np.float64)
        w.setflags(write=False)
        out[name] = w
    return out


def build(spec: ReservoirSpec) -> ReservoirWeights:
    """Draw every block i.i.d. N(0, (weight_scale / sqrt(fan_in))^2); blocks are read-only."""
    sizes = dict(spec.subnet_sizes(), input=INPUT_DIM)
    rng = np.random.default_rng(spec.seed)
    blocks = {}
    for name, pre, post in BLOCKS:
        fan_in = sizes[pre]
        w = rng.normal(0.0, spec.weight_scale / np.sqrt(fan_in), size=(sizes[post], fan_in))
        if name in RECURRENT and not spec.self_connections:
            np.fill_diagonal(w, 0.0)
        blocks[name] = w
    return ReservoirWeights(_freeze(blocks))


def _flatten_windows(windows):
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim == 2:
        windows = windows[None]
    if windows.shape[1:] != (50, 3):
        raise ValueError(f"expected window(s) of shape (50, 3), got {windows.shape}")
    if not np.all(np.isfinite(windows)):
        raise ValueError("input windows must be finite")
    return windows.reshape(windows.shape[0], INPUT_DIM)


def run_batch(weights: ReservoirWeights, spec: ReservoirSpec, windows):
    """Features for a stack of normalised (k, 50, 3) windows -> (k, feature_dim)."""
    flat = _flatten_windows(windows)
    proj = flat @ weights["W_in"].T
    features, finite = _kernels.run_reservoir(
        proj, [weights[name] for name in KERNEL_ORDER],
        spec.neuron.beta, spec.neuron.u_thr,
        spec.astrocyte.beta, spec.astrocyte.alpha, spec.astrocyte.u_thr,
        spec.presentations, spec.input_every_step)
    if not np.all(finite):
        bad = np.flatnonzero(~finite)
        raise ReservoirDivergence(f"non-finite reservoir state for windows {bad[:10].tolist()}; "
                                  f"weight_scale={spec.weight_scale} is too large")
    return features


def run(weights: ReservoirWeights, spec: ReservoirSpec, window):
    """Features for one normalised 50x3 window (spike counts / presentations)."""
    return run_batch(weights, spec, window)[0]


# --------------------------------------------------------------------------
# step-level reference built from the unit step functions
# --------------------------------------------------------------------------

GROUPS = ("n1", "n2", "a1", "a2")


def zero_state(spec: ReservoirSpec) -> Dict[str, UnitState]:
    sizes = spec.subnet_sizes()
    return {g: UnitState.zeros(sizes[g], astrocyte=g.startswith("a")) for g in GROUPS}


def step(state, weights: ReservoirWeights, spec: ReservoirSpec, drive, order=GROUPS):
    """Advance all four subnets one synchronous step.

    Currents are computed from ``state`` (spikes of t-1) before any subnet is
    updated, so the evaluation ``order`` cannot affect the result.
    """
    snapshot = {g: state[g].spikes for g in GROUPS}
    new = {}
    for g in order:
        current = np.zeros_like(state[g].u)
        if g == "n1":
            current = current + drive
        for name, pre, post in BLOCKS:
            if post == g and pre != "input":
                current = current + weights[name] @ snapshot[pre]
        if g.startswith("n"):
            new[g] = neuron_step(state[g], current, spec.neuron)
        else:
            new[g] = astrocyte_step(state[g], current, spec.astrocyte)
    return new


def run_reference(weights: ReservoirWeights, spec: ReservoirSpec, window, order=GROUPS):
    """Unbatched run via ``step``; slow, used to cross-check the kernels."""
    proj = weights["W_in"] @ _flatten_windows(window)[0]
    state = zero_state(spec)
    counts = np.zeros(spec.feature_dim)
    n1 = spec.subnet_sizes()["n1"]
    for t in range(spec.presentations):
        drive = proj if (spec.input_every_step or t == 0) else np.zeros_like(proj)
        state = step(state, weights, spec, drive, order=order)
        counts[:n1] += state["n1"].spikes
        counts[n1:] += state["n2"].spikes
    return counts / spec.presentations, state
