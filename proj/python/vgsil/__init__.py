"""Geometric skill kernels learned from synthetic demonstrations.

Demonstrations, trained kernels and reports are plain dicts with the same
layout as the JSON files written by the ``vgsil`` command-line tool.
"""

import json

from . import _core
from ._core import VgsilError, accuracy, autocorr, con_acc, quality_score, select_out

__all__ = [
    "VgsilError",
    "accuracy",
    "apply_perturbation",
    "autocorr",
    "closed_loop",
    "con_acc",
    "evaluate",
    "gen_demo",
    "infer",
    "quality_score",
    "select_out",
    "train",
]


def _dump(obj):
    return json.dumps(obj if obj is not None else {})


def gen_demo(config=None, **overrides):
    """Generate a demonstration. Keys follow the ``config`` block of a demo file."""
    cfg = dict(config or {})
    cfg.update(overrides)
    return json.loads(_core.gen_demo(_dump(cfg)))


def apply_perturbation(demo, kind, magnitude=1.0, seed=0):
    return json.loads(_core.apply_perturbation(_dump(demo), kind, magnitude, seed))


def train(demo, kind=None, config=None, **overrides):
    """Train a kernel; ``kind`` defaults to the demonstration's ground-truth kernel."""
    cfg = dict(config or {})
    cfg.update(overrides)
    return json.loads(_core.train(_dump(demo), kind or "", _dump(cfg)))


def evaluate(demo, model):
    return json.loads(_core.evaluate(_dump(demo), _dump(model)))


def infer(demo, frame, model):
    return json.loads(_core.infer(_dump(demo), frame, _dump(model)))


def closed_loop(model, world=None, servo=None):
    """Run closed-loop servoing in a scene built from ``world`` (a demo config)."""
    return json.loads(_core.closed_loop(_dump(model), _dump(world), _dump(servo)))
