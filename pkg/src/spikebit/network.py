"""Layer specifications and the timestep-unrolled spiking forward pass.

A network is a flat list of LayerSpec values.  forward_sequence runs the
whole spike train through it, one timestep at a time, keeping per-layer
IF membrane state alive across steps and averaging the final layer's
spike outputs over time into a (N, K) readout.  Membrane state is fresh
for every call: samples are independent sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Variable
from .encoders import SpikeTrain
from .neuron import SEW_MODES, NeuronConfig
from .tensor import SeededRng


class NetworkError(ValueError):
    """Layer dims do not compose, or a spec field is invalid."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    mode: str = ""
    children: tuple["LayerSpec", ...] = ()
    neuron: NeuronConfig | None = None


def linear(in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec("linear", in_features=in_features, out_features=out_features)


def conv2d(in_channels: int, out_channels: int, kernel: int = 3,
           stride: int = 1, padding: int = 1) -> LayerSpec:
    return LayerSpec("conv2d", in_channels=in_channels, out_channels=out_channels,
                     kernel=kernel, stride=stride, padding=padding)


def if_neuron(cfg: NeuronConfig | None = None) -> LayerSpec:
    return LayerSpec("if_neuron", neuron=cfg)


def avg_pool(kernel: int = 2) -> LayerSpec:
    return LayerSpec("avg_pool", kernel=kernel)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def sew_block(channels: int, mode: str, cfg: NeuronConfig | None = None) -> LayerSpec:
    """Residual block: two conv+IF stages whose output is element-wise
    combined with the block input (ADD, AND, or IAND)."""
    if mode not in SEW_MODES:
        raise NetworkError(f"sew mode must be one of {SEW_MODES}, got {mode!r}")
    children = (
        conv2d(channels, channels, 3, 1, 1), if_neuron(cfg),
        conv2d(channels, channels, 3, 1, 1), if_neuron(cfg),
    )
    return LayerSpec("sew_block", in_channels=channels, out_channels=channels,
                     mode=mode, children=children)


ARCH_NAMES = ("mlp", "convnet", "sew_add", "sew_and", "sew_iand")


def build_arch(name: str, input_shape: tuple[int, int, int], num_classes: int,
               cfg: NeuronConfig | None = None) -> list[LayerSpec]:
    """Desk-scale architectures keyed by name, sized to the dataset."""
    c, h, w = input_shape
    if name == "mlp":
        return [flatten(), linear(c * h * w, 256), if_neuron(cfg),
                linear(256, num_classes), if_neuron(cfg)]
    if name == "convnet":
        if h % 4 or w % 4:
            raise NetworkError(f"convnet needs spatial dims divisible by 4, got {(h, w)}")
        return [conv2d(c, 16), if_neuron(cfg), avg_pool(2),
                conv2d(16, 32), if_neuron(cfg), avg_pool(2),
                flatten(), linear(32 * (h // 4) * (w // 4), num_classes), if_neuron(cfg)]
    if name in ("sew_add", "sew_and", "sew_iand"):
        if h % 4 or w % 4:
            raise NetworkError(f"sew nets need spatial dims divisible by 4, got {(h, w)}")
        mode = name.split("_", 1)[1].upper()
        return [conv2d(c, 16), if_neuron(cfg), avg_pool(2),
                sew_block(16, mode, cfg), avg_pool(2),
                flatten(), linear(16 * (h // 4) * (w // 4), num_classes), if_neuron(cfg)]
    raise NetworkError(f"unknown architecture {name!r}; choose from {ARCH_NAMES}")


def _conv_out(extent: int, kernel: int, stride: int, padding: int) -> int:
    out = (extent + 2 * padding - kernel) // stride + 1
    if out <= 0:
        raise NetworkError(f"conv output extent {out} is not positive")
    return out


def infer_shapes(net: list[LayerSpec], input_shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Per-layer output shapes (batch axis excluded); raises if dims do not compose."""
    shape = tuple(input_shape)
    shapes = []
    for spec in net:
        if spec.kind == "linear":
            if len(shape) != 1 or shape[0] != spec.in_features:
                raise NetworkError(
                    f"linear expects flat ({spec.in_features},) input, got {shape}"
                )
            shape = (spec.out_features,)
        elif spec.kind == "conv2d":
            if len(shape) != 3 or shape[0] != spec.in_channels:
                raise NetworkError(
                    f"conv2d expects ({spec.in_channels}, H, W) input, got {shape}"
                )
            shape = (spec.out_channels,
                     _conv_out(shape[1], spec.kernel, spec.stride, spec.padding),
                     _conv_out(shape[2], spec.kernel, spec.stride, spec.padding))
        elif spec.kind == "avg_pool":
            if len(shape) != 3 or shape[1] % spec.kernel or shape[2] % spec.kernel:
                raise NetworkError(f"avg_pool kernel {spec.kernel} does not divide {shape}")
            shape = (shape[0], shape[1] // spec.kernel, shape[2] // spec.kernel)
        elif spec.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif spec.kind == "if_neuron":
            pass
        elif spec.kind == "sew_block":
            inner = infer_shapes(list(spec.children), shape)
            if inner[-1] != shape:
                raise NetworkError(
                    f"sew_block must preserve shape, got {shape} -> {inner[-1]}"
                )
        else:
            raise NetworkError(f"unknown layer kind {spec.kind!r}")
        shapes.append(shape)
    return shapes


def init_params(net: list[LayerSpec], rng: SeededRng, prefix: str = "layer") -> list[Parameter]:
    """Uniform +-sqrt(1/fan_in) weights, zero biases, in traversal order."""
    params: list[Parameter] = []
    for i, spec in enumerate(net):
        name = f"{prefix}{i}"
        if spec.kind == "linear":
            bound = np.sqrt(1.0 / spec.in_features)
            w = rng.uniform(-bound, bound, (spec.in_features, spec.out_features))
            params.append(Parameter(w, f"{name}.weight"))
            params.append(Parameter(np.zeros(spec.out_features), f"{name}.bias"))
        elif spec.kind == "conv2d":
            fan_in = spec.in_channels * spec.kernel * spec.kernel
            bound = np.sqrt(1.0 / fan_in)
            w = rng.uniform(-bound, bound,
                            (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel))
            params.append(Parameter(w, f"{name}.weight"))
            params.append(Parameter(np.zeros(spec.out_channels), f"{name}.bias"))
        elif spec.kind == "sew_block":
            params.extend(init_params(list(spec.children), rng, prefix=f"{name}."))
    return params


class _IfRun:
    """Per-sequence IF state; the reset gate is detached in spiking mode."""

    def __init__(self, cfg: NeuronConfig, relaxed: bool):
        self.cfg = cfg
        self.relaxed = relaxed
        self.u: Variable | None = None
        self.s_prev: Variable | None = None

    def step(self, drive: Variable) -> Variable:
        if self.u is None:
            self.u = ad.constant(np.zeros_like(drive.data))
            self.s_prev = ad.constant(np.zeros_like(drive.data))
        if self.relaxed:
            gate = ad.sub(1.0, self.s_prev)
        else:
            gate = ad.constant(1.0 - self.s_prev.data)
        u = ad.add(ad.mul(gate, self.u), drive)
        fire = ad.spike_relaxed if self.relaxed else ad.spike
        s = fire(u, self.cfg.v_th, self.cfg.alpha)
        self.u, self.s_prev = u, s
        return s


class _SewRun:
    def __init__(self, children: list, mode: str):
        self.children = children
        self.mode = mode

    def step(self, x: Variable) -> Variable:
        y = x
        for child in self.children:
            y = child.step(y) if isinstance(child, (_IfRun, _SewRun)) else child(y)
        if self.mode == "ADD":
            return ad.add(y, x)
        if self.mode == "AND":
            return ad.mul(y, x)
        return ad.mul(ad.sub(1.0, y), x)  # IAND


def _build_runners(net: list[LayerSpec], params: list[Parameter],
                   default_cfg: NeuronConfig, relaxed: bool):
    it = iter(params)
    def build(specs):
        runners = []
        for spec in specs:
            if spec.kind == "linear":
                w, b = next(it), next(it)
                runners.append(lambda x, w=w, b=b: ad.add(ad.matmul(x, w), b))
            elif spec.kind == "conv2d":
                w, b = next(it), next(it)
                runners.append(lambda x, w=w, b=b, s=spec: ad.conv2d(x, w, b, s.stride, s.padding))
            elif spec.kind == "avg_pool":
                runners.append(lambda x, k=spec.kernel: ad.avg_pool2d(x, k))
            elif spec.kind == "flatten":
                runners.append(lambda x: ad.reshape(x, (x.shape[0], -1)))
            elif spec.kind == "if_neuron":
                runners.append(_IfRun(spec.neuron or default_cfg, relaxed))
            elif spec.kind == "sew_block":
                runners.append(_SewRun(build(list(spec.children)), spec.mode))
            else:
                raise NetworkError(f"unknown layer kind {spec.kind!r}")
        return runners
    runners = build(net)
    leftovers = sum(1 for _ in it)
    if leftovers:
        raise NetworkError(f"{leftovers} unused parameters for this network")
    return runners


@dataclass
class SequenceStats:
    """Instrumentation from one forward pass."""

    timesteps: int = 0


def forward_sequence(
    net: list[LayerSpec],
    params: list[Parameter],
    spikes_in: SpikeTrain | np.ndarray,
    neuron_cfg: NeuronConfig | None = None,
    relaxed: bool = False,
) -> tuple[Variable, SequenceStats]:
    """Run every timestep through the network; readout is the time mean of
    the final layer's outputs, shape (N, num_classes).

    relaxed swaps the hard threshold for its smooth arctangent primitive
    everywhere (including the reset gate), making the pass differentiable
    end to end for gradient checking.
    """
    frames = spikes_in.spikes.data if isinstance(spikes_in, SpikeTrain) else np.asarray(spikes_in)
    if frames.ndim < 2:
        raise NetworkError(f"spike train must be at least (T, N, ...), got {frames.shape}")
    infer_shapes(net, frames.shape[2:])
    cfg = neuron_cfg or NeuronConfig()
    runners = _build_runners(net, params, cfg, relaxed)

    stats = SequenceStats()
    total: Variable | None = None
    for t in range(frames.shape[0]):
        x = ad.constant(frames[t].astype(np.float64))
        for runner in runners:
            x = runner.step(x) if isinstance(runner, (_IfRun, _SewRun)) else runner(x)
        total = x if total is None else ad.add(total, x)
        stats.timesteps += 1
    readout = ad.mul(total, 1.0 / frames.shape[0])
    return readout, stats
