"""Causal tracing for multimodal (audio + text) decoder-only transformers."""

from ._core import (
    Dataset,
    Model,
    TraceError,
    expected_layer_map,
    layer_sweep,
    oracle_dataset,
    oracle_model,
    recovery_rate,
    render_figures,
    results_csv,
    token_sweep,
    trace,
)

__all__ = [
    "Dataset",
    "Model",
    "TraceError",
    "expected_layer_map",
    "layer_sweep",
    "oracle_dataset",
    "oracle_model",
    "recovery_rate",
    "render_figures",
    "results_csv",
    "token_sweep",
    "trace",
]
