"""spikebit: spike encoders (rate, TTFS, bit planes, hybrids), hard-reset
IF neurons with surrogate-gradient BPTT training, and an experiment
harness for encoder comparisons."""

from .encoders import (
    EncoderConfig,
    ImageBatch,
    SpikeTrain,
    bit_count,
    bitplane_encode,
    encode,
    hybrid_rate_bit_encode,
    hybrid_temporal_bit_encode,
    rate_encode,
    ttfs_encode,
)
from .harness import (
    MetricsRecord,
    TrainConfig,
    compare_encoders,
    emit_csv,
    emit_markdown,
    run_experiment,
)
from .neuron import IfLayerState, NeuronConfig, heaviside, if_step, sew_combine, surrogate_grad
from .tensor import DType, SeededRng, Tensor

__version__ = "0.1.0"

__all__ = [
    "DType",
    "EncoderConfig",
    "IfLayerState",
    "ImageBatch",
    "MetricsRecord",
    "NeuronConfig",
    "SeededRng",
    "SpikeTrain",
    "Tensor",
    "TrainConfig",
    "bit_count",
    "bitplane_encode",
    "compare_encoders",
    "emit_csv",
    "emit_markdown",
    "encode",
    "heaviside",
    "hybrid_rate_bit_encode",
    "hybrid_temporal_bit_encode",
    "if_step",
    "rate_encode",
    "run_experiment",
    "sew_combine",
    "surrogate_grad",
    "ttfs_encode",
]
