"""Quantization-friendly self-supervised pretraining.

Thin forward-only surface over the C++ core: the quantizer, the siamese
losses, dataset plumbing, pretraining, and PTQ evaluation.
"""

from ._core import (
    Dataset,
    Model,
    ModelSpec,
    SsqlError,
    __version__,
    build_model,
    compute_qparams,
    decompose,
    gen_synthetic,
    info_nce_loss,
    linear_probe,
    load_checkpoint,
    load_cifar10,
    pretrain,
    quantize_dequantize,
    run_cli,
    save_checkpoint,
    simsiam_loss,
    ssql_loss,
    stratified_subset,
    sweep,
    version,
)

__all__ = [
    "Dataset",
    "Model",
    "ModelSpec",
    "SsqlError",
    "__version__",
    "build_model",
    "compute_qparams",
    "decompose",
    "gen_synthetic",
    "info_nce_loss",
    "linear_probe",
    "load_checkpoint",
    "load_cifar10",
    "pretrain",
    "quantize_dequantize",
    "run_cli",
    "save_checkpoint",
    "simsiam_loss",
    "ssql_loss",
    "stratified_subset",
    "sweep",
    "version",
]
