"""Argument checks shared by the estimators and pipeline stages."""
from __future__ import annotations

import numbers

import numpy as np

from .core import GenealogyGraph


def check_graph(graph) -> GenealogyGraph:
    if not isinstance(graph, GenealogyGraph):
        raise TypeError(f"expected a GenealogyGraph, got {type(graph).__name__}")
    return graph


def check_seed(seed) -> int:
    """Seeds must be explicit non-negative integers; wall-clock seeding is not allowed."""
    if seed is None or isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_probability(value, name: str, *, open_left: bool = False) -> float:
    value = float(value)
    if not np.isfinite(value) or value > 1 or value < 0 or (open_left and value == 0):
        interval = "(0, 1]" if open_left else "[0, 1]"
        raise ValueError(f"{name} must lie in {interval}, got {value!r}")
    return value


def check_choice(value, name: str, options) -> str:
    if value not in options:
        raise ValueError(f"{name} must be one of {tuple(options)}, got {value!r}")
    return value


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) pair, stable across call orders."""
    return np.random.default_rng([check_seed(seed), *key])
