"""Functional competing-risks networks: simulate, train, predict, evaluate."""
import json

from . import _fcrn
from ._fcrn import FcrnError, censoring_survival, ibs

__all__ = ["FcrnError", "censoring_survival", "default_config", "evaluate", "ibs", "predict",
           "resolve_config", "simulate", "train"]


def default_config():
    return json.loads(_fcrn.default_config())


def resolve_config(path="", overrides=()):
    return json.loads(_fcrn.resolve_config(path, list(overrides)))


def simulate(config):
    """Writes the dataset into config["output_dir"] and returns the manifest."""
    return json.loads(_fcrn.simulate(json.dumps(config)))


def train(config):
    return _fcrn.train(json.dumps(config))


def predict(config):
    return _fcrn.predict(json.dumps(config))


def evaluate(config):
    return _fcrn.evaluate(json.dumps(config))
