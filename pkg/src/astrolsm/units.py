"""Neuron-like and astrocyte-like spiking units.

Neurons are first-order leaky integrate-and-fire units with reset by
subtraction.  Astrocytes are second-order LIF units whose synaptic current
has its own decay and whose membrane is never reset: they keep emitting 1
for as long as the potential stays above threshold.

Step functions work on arrays of any shape (one subnetwork, or a batch of
windows times units); the last axis indexes units.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class NeuronConfig:
    beta: float = 0.9
    u_thr: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"neuron beta must lie in (0, 1], got {self.beta}")
        if self.u_thr <= 0.0:
            raise ValueError(f"neuron u_thr must be positive, got {self.u_thr}")


@dataclass(frozen=True)
class AstrocyteConfig:
    beta: float = 0.99
    alpha: float = 0.95
    u_thr: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"astrocyte beta must lie in (0, 1], got {self.beta}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"astrocyte alpha must lie in (0, 1), got {self.alpha}")
        if self.u_thr <= 0.0:
            raise ValueError(f"astrocyte u_thr must be positive, got {self.u_thr}")


@dataclass(frozen=True)
class UnitState:
    u: np.ndarray
    spikes: np.ndarray
    i_syn: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, n, astrocyte=False):
        return cls(u=np.zeros(n), spikes=np.zeros(n),
                   i_syn=np.zeros(n) if astrocyte else None)


def _check(state, current):
    current = np.asarray(current, dtype=np.float64)
    if current.shape != state.u.shape:
        raise ValueError(f"input length {current.shape} does not match state {state.u.shape}")
    if not np.all(np.isfinite(current)):
        raise ValueError("input current must be finite")
    return current


def neuron_step(state: UnitState, input_current, cfg: NeuronConfig) -> UnitState:
    current = _check(state, input_current)
    u_pre = cfg.beta * state.u + current
    spikes = (u_pre > cfg.u_thr).astype(np.float64)
    return UnitState(u=u_pre - spikes * cfg.u_thr, spikes=spikes)


def astrocyte_step(state: UnitState, input_current, cfg: AstrocyteConfig) -> UnitState:
    current = _check(state, input_current)
    if state.i_syn is None:
        raise ValueError("astrocyte state requires a synaptic current vector")
    i_syn = cfg.alpha * state.i_syn + current
    u = cfg.beta * state.u + i_syn
    return UnitState(u=u, spikes=(u > cfg.u_thr).astype(np.float64), i_syn=i_syn)


def impulse_response(cfg, steps):
    """Membrane trace of a single unit after a unit input at t=0 (no further input)."""
    astro = isinstance(cfg, AstrocyteConfig)
    state = UnitState.zeros(1, astrocyte=astro)
    step = astrocyte_step if astro else neuron_step
    trace = np.empty(steps)
    for t in range(steps):
        state = step(state, np.array([1.0 if t == 0 else 0.0]), cfg)
        trace[t] = state.u[0]
    return trace
