"""Python access to the vulstyle core: parsing, stylometry features,
tokenization, masking, metrics and the synthetic corpus generator."""

import json

from . import _vulstyle
from ._vulstyle import (
    FEATURE_COUNT,
    Error,
    Tokenizer,
    annotation,
    feature_names,
    features,
    finetune_text,
    parse_errors,
    pretrain_text,
    reduce,
    reduction_ratio,
)

__all__ = [
    "FEATURE_COUNT",
    "Error",
    "Tokenizer",
    "annotation",
    "feature_names",
    "features",
    "finetune_text",
    "generate",
    "mask",
    "metrics",
    "metrics_from_counts",
    "parse",
    "parse_errors",
    "pretrain_text",
    "reduce",
    "reduction_ratio",
]


def parse(source):
    """Parse a C-like function and return the exchange-format tree as a dict."""
    return json.loads(_vulstyle.parse_json(source))


def mask(ids, vocab_size, seed=1, rates=""):
    return json.loads(_vulstyle.mask(list(ids), vocab_size, seed, rates))


def metrics(labels, predictions):
    return json.loads(_vulstyle.metrics(list(labels), list(predictions)))


def metrics_from_counts(tp, tn, fp, fn):
    return json.loads(_vulstyle.metrics_from_counts(tp, tn, fp, fn))


def generate(n=2000, vulnerable_fraction=0.5, signal_strength=0.9, seed=1):
    """Synthetic labelled functions as a list of record dicts."""
    return [json.loads(line) for line in _vulstyle.generate(n, vulnerable_fraction, signal_strength, seed)]
