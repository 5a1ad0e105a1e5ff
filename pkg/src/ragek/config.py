"""Run configuration: defaults, YAML loading, validation and seed streams."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
import yaml

from .data import mnist_pairs_plan
from .learner import ModelSpec
from .sparsifiers import ParameterError, make_sparsifier


class ConfigError(ValueError):
    pass


# independent seed streams derived from the master seed
STREAM_DATA, STREAM_SHARD, STREAM_INIT, STREAM_BATCH, STREAM_SPARSIFY = range(5)


def seed_stream(master, stream, index=0):
    """A generator for one named stream; per-client streams are keyed by client id."""
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=(stream, index)))


@dataclass
class RunConfig:
    num_clients: int = 10
    sparsifier: str = "ragek"
    r: int = 75
    k: int = 10
    client_k: Optional[list] = None
    local_steps: int = 4
    recluster_period: int = 20
    iterations: int = 400
    eps: float = 0.6
    min_pts: int = 2
    disjoint: bool = True
    seed: int = 0
    layer_sizes: list = field(default_factory=lambda: [784, 50, 10])
    optimizer: str = "adam"
    lr: float = 1e-4
    ps_optimizer: str = "adam"
    ps_lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    aggregation_scale: Optional[float] = None
    reset_local_optimizer: bool = False
    batch_size: int = 256
    value_bits: int = 64
    target_accuracy: float = 0.9
    data: str = "synthetic"
    num_classes: int = 10
    input_dim: int = 784
    per_class_count: int = 200
    separation: float = 5.0
    mnist_images: Optional[str] = None
    mnist_labels: Optional[str] = None
    shard_plan: list = field(default_factory=lambda: [list(c) for c in mnist_pairs_plan().class_assignment])
    overlap: bool = False

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                raw = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"malformed config file {path}: {exc}") from exc
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a mapping of keys to values")
        return cls.from_dict(raw)

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["aggregation_scale"] = self.scale
        return out

    def dump(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def model_spec(self):
        return ModelSpec(tuple(self.layer_sizes))

    @property
    def dim(self):
        return self.model_spec.num_params

    @property
    def scale(self):
        return 1.0 / self.num_clients if self.aggregation_scale is None else float(self.aggregation_scale)

    @property
    def budgets(self):
        return list(self.client_k) if self.client_k is not None else [self.k] * self.num_clients

    def make_sparsifier(self):
        return make_sparsifier(self.sparsifier, self.r, self.k)

    def validate(self):
        """Check every constraint without touching data; returns self."""
        try:
            spec = self.model_spec
        except ValueError as exc:
            raise ConfigError(f"layer_sizes: {exc}") from exc
        d = spec.num_params
        checks = [
            (self.num_clients >= 1, "num_clients must be at least 1"),
            (self.local_steps >= 1, "local_steps (H) must be at least 1"),
            (self.recluster_period >= 1 and self.recluster_period % self.local_steps == 0,
             "recluster_period (M) must be a positive multiple of local_steps (H)"),
            (self.iterations >= self.recluster_period,
             f"iterations (T={self.iterations}) must be at least recluster_period (M={self.recluster_period})"),
            (self.eps > 0, "eps must be positive"),
            (self.min_pts >= 1, "min_pts must be at least 1"),
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.value_bits in (32, 64), "value_bits must be 32 or 64"),
            (len(self.shard_plan) == self.num_clients,
             f"shard_plan lists {len(self.shard_plan)} clients but num_clients={self.num_clients}"),
            (self.data in ("synthetic", "mnist"), "data must be 'synthetic' or 'mnist'"),
            (self.optimizer in ("sgd", "adam") and self.ps_optimizer in ("sgd", "adam"),
             "optimizer and ps_optimizer must be 'sgd' or 'adam'"),
            (self.lr > 0 and self.ps_lr > 0, "learning rates must be positive"),
            (0 < self.target_accuracy <= 1, "target_accuracy must lie in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.make_sparsifier().validate(d)
        except ParameterError as exc:
            raise ConfigError(f"sparsifier: {exc}") from exc
        if self.client_k is not None:
            if len(self.client_k) != self.num_clients:
                raise ConfigError("client_k needs one budget per client")
            if any(not 1 <= b <= self.r for b in self.client_k):
                raise ConfigError("every client_k must satisfy 1 <= k_i <= r")
        classes = {c for cls in self.shard_plan for c in cls}
        n_out = spec.layer_sizes[-1]
        if self.data == "synthetic":
            if self.input_dim != spec.layer_sizes[0]:
                raise ConfigError(f"input_dim={self.input_dim} does not match layer_sizes[0]={spec.layer_sizes[0]}")
            if self.num_classes > n_out:
                raise ConfigError("num_classes exceeds the model's output size")
            n_classes = self.num_classes
        else:
            if not (self.mnist_images and self.mnist_labels):
                raise ConfigError("data=mnist requires mnist_images and mnist_labels paths")
            n_classes = n_out
        if not classes or min(classes) < 0 or max(classes) >= n_classes:
            raise ConfigError(f"shard_plan classes must lie in [0, {n_classes})")
        return self


def packaged_config(name):
    """Path-like handle to a config shipped with the package (e.g. ``mnist_pairs``)."""
    return resources.files("ragek") / "configs" / f"{name}.yaml"
