"""Auditory attention decoding lab: contrastive vs attended-only correlation training on synthetic EEG."""

from .correlation import (
    CorrelationRecord,
    EnvelopeSet,
    LossKind,
    correlate_all,
    decoding_accuracy,
    loss_delta_pcc,
    loss_pcc,
    pearson,
    pearson_grad,
)
from .decoder import DecoderConfig, DecoderParams, EegSegment
from .synth import SynthConfig
from .train import TrainConfig, train_model

__version__ = "0.1.0"
