"""Anytime structured prediction: synthetic scenes, cost-greedy boosting, budgeted inference."""

import json as _json
import math as _math

from ._speedy import (  # noqa: F401
    DimensionMismatch,
    Instance,
    InvalidInput,
    IoError,
    Model,
    cross_entropy_risk,
    descent_direction,
    evaluate_corpus,
    infer,
    instance_from_text,
    load_corpus,
    load_instance,
    load_model,
    model_from_text,
    profile_corpus,
    save_instance,
    softmax,
)
from . import _speedy

UNLIMITED = _math.inf


def generate_corpus(count, seed, **scene):
    """Synthetic scenes; keyword arguments override scene settings (width, num_classes, ...)."""
    return _speedy.generate_corpus(count, seed, _json.dumps(scene) if scene else "")


def write_corpus(directory, count, seed, **scene):
    """Writes scenes plus manifest.json and returns the manifest hash."""
    return _speedy.write_corpus(str(directory), count, seed, _json.dumps(scene) if scene else "")


def train(instances, **config):
    """Returns (model, log, initial_risk). Keyword arguments are training settings."""
    return _speedy.train(instances, _json.dumps(config) if config else "")
