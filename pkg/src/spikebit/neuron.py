"""Hard-reset integrate-and-fire dynamics and spike-combining primitives.

The membrane update is

    u(t) = (1 - s(t-1)) * u(t-1) + input_current(t)
    s(t) = 1 if u(t) - v_th >= 0 else 0

so a neuron that spiked has its carried-over potential wiped before the
next integration.  The spike nonlinearity's stand-in derivative is the
arctangent-shaped surrogate alpha / (2 * (1 + ((pi/2) * alpha * x)^2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SEW_MODES = ("ADD", "AND", "IAND")


@dataclass(frozen=True)
class NeuronConfig:
    v_th: float = 1.0
    alpha: float = 2.0

    def __post_init__(self) -> None:
        if self.v_th <= 0:
            raise ValueError(f"v_th must be positive, got {self.v_th}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True, eq=False)
class IfLayerState:
    """Membrane potentials and previous-step spikes, equal shapes."""

    u: np.ndarray
    s_prev: np.ndarray

    def __post_init__(self) -> None:
        if self.u.shape != self.s_prev.shape:
            raise ValueError(
                f"u shape {self.u.shape} != s_prev shape {self.s_prev.shape}"
            )

    @classmethod
    def initial(cls, shape: tuple[int, ...]) -> "IfLayerState":
        """Fresh state: u(0) = 0 and s(-1) = 0."""
        return cls(np.zeros(shape), np.zeros(shape, dtype=np.uint8))


def heaviside(x: np.ndarray, v_th: float) -> np.ndarray:
    """1 where x - v_th >= 0 (equality spikes), else 0."""
    return (np.asarray(x) - v_th >= 0).astype(np.uint8)


def surrogate_grad(x: np.ndarray, alpha: float = 2.0) -> np.ndarray:
    """Surrogate derivative of the spike threshold at pre-threshold x = u - v_th.

    Strictly positive, even in x, maximal at 0 with value alpha / 2.
    """
    z = (np.pi / 2.0) * alpha * np.asarray(x, dtype=np.float64)
    return alpha / (2.0 * (1.0 + z * z))


def smooth_heaviside(x: np.ndarray, alpha: float = 2.0) -> np.ndarray:
    """Differentiable relaxation of the threshold: arctan((pi/2)*alpha*x)/pi + 1/2.

    Its exact derivative is :func:`surrogate_grad`; used by the
    finite-difference gradient oracle and relaxed forward passes.
    """
    z = (np.pi / 2.0) * alpha * np.asarray(x, dtype=np.float64)
    return np.arctan(z) / np.pi + 0.5


def if_step(
    state: IfLayerState, input_current: np.ndarray, cfg: NeuronConfig
) -> tuple[IfLayerState, np.ndarray]:
    """One timestep of hard-reset IF dynamics.

    input_current is the already-computed synaptic drive for this step.
    Returns the new state (carrying the emitted spikes as s_prev) and the
    spikes themselves.
    """
    input_current = np.asarray(input_current, dtype=np.float64)
    if input_current.shape != state.u.shape:
        raise ValueError(
            f"input shape {input_current.shape} != state shape {state.u.shape}"
        )
    u = (1.0 - state.s_prev) * state.u + input_current
    spikes = heaviside(u, cfg.v_th)
    return IfLayerState(u, spikes), spikes


def sew_combine(s_a: np.ndarray, s_b: np.ndarray, mode: str) -> np.ndarray:
    """Element-wise spike combination: ADD -> a + b (values up to 2),
    AND -> a * b, IAND -> (1 - a) * b."""
    s_a = np.asarray(s_a)
    s_b = np.asarray(s_b)
    if s_a.shape != s_b.shape:
        raise ValueError(f"shape mismatch: {s_a.shape} vs {s_b.shape}")
    if mode == "ADD":
        return s_a.astype(np.int64) + s_b.astype(np.int64)
    if mode == "AND":
        return (s_a.astype(np.int64) * s_b.astype(np.int64)).astype(np.uint8)
    if mode == "IAND":
        return ((1 - s_a.astype(np.int64)) * s_b.astype(np.int64)).astype(np.uint8)
    raise ValueError(f"mode must be one of {SEW_MODES}, got {mode!r}")
