"""Federated training loop with sparsified uplink and age-driven clustering.

Every iteration each client takes one local descent step. Every
``local_steps`` iterations a global round runs: clients report gradients,
the parameter server picks which coordinates to request, aggregates the
sparse replies, steps the global model and broadcasts it. Every
``recluster_period`` iterations the server re-clusters clients by how often
each coordinate was requested from them.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np

from . import aging, clustering, learner, sparsifiers
from .config import (
    STREAM_BATCH,
    STREAM_DATA,
    STREAM_INIT,
    STREAM_SHARD,
    STREAM_SPARSIFY,
    RunConfig,
    seed_stream,
)
from .data import Batcher, ShardPlan, load_mnist, shard, synth_generate
from .vectors import SparseUpdate, aggregate

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"RGKC"


def index_bits(d):
    """ceil(log2 d), computed exactly."""
    return (d - 1).bit_length()


@dataclass
class CommLedger:
    """Bits exchanged between clients and the parameter server.

    Uplink has two phases: the top-r index report (rAge-k only) and the
    requested values with their indices. Downlink has the request message
    (rAge-k only) and the full model broadcast.
    """

    num_clients: int
    d: int
    value_bits: int = 64
    uplink: list = field(default=None)
    downlink: list = field(default=None)
    rounds: list = field(default_factory=list)

    def __post_init__(self):
        self.uplink = [0] * self.num_clients
        self.downlink = [0] * self.num_clients

    def record(self, round_idx, client, reported, sent, requested):
        ib = index_bits(self.d)
        report = reported * ib
        payload = sent * (ib + self.value_bits)
        request = requested * ib
        broadcast = self.d * self.value_bits
        self.uplink[client] += report + payload
        self.downlink[client] += request + broadcast
        self.rounds.append({
            "round": round_idx, "client": client, "report_bits": report,
            "payload_bits": payload, "request_bits": request, "broadcast_bits": broadcast,
        })

    def uplink_by_round(self):
        """{(round, client): uplink bits}"""
        return {(e["round"], e["client"]): e["report_bits"] + e["payload_bits"] for e in self.rounds}

    @property
    def total_uplink(self):
        return sum(self.uplink)

    @property
    def total_downlink(self):
        return sum(self.downlink)


@dataclass
class Client:
    cid: int
    batcher: Batcher
    theta: np.ndarray
    optimizer: object
    rng: np.random.Generator
    last_loss: float = float("nan")

    @property
    def data(self):
        return self.batcher.dataset

    def local_step(self, spec):
        X, y = self.batcher.next_batch()
        self.last_loss, g = learner.loss_and_gradient(spec, self.theta, X, y)
        self.theta = self.optimizer.apply(self.theta, g)

    def gradient_for_report(self, spec):
        """Gradient at the current local parameters on a fresh batch."""
        X, y = self.batcher.next_batch()
        return learner.loss_and_gradient(spec, self.theta, X, y)[1]


@dataclass
class RoundRecord:
    """Everything the server saw and decided in one global round."""

    t: int
    round: int
    candidates: list
    requested: list
    ages_before: dict
    ages_after: dict
    members: dict
    freqs: np.ndarray
    aggregated: np.ndarray


@dataclass
class ReclusterEvent:
    t: int
    similarity: np.ndarray
    distance: np.ndarray
    labels: np.ndarray


@dataclass
class RunReport:
    config: RunConfig
    rows: list
    clusters: clustering.ClusterState
    ledger: CommLedger
    events: list
    theta: np.ndarray
    freqs: np.ndarray

    def series(self, key):
        return np.array([row[key] for row in self.rows])

    def rounds_to_accuracy(self, target):
        """First global round whose mean client accuracy reaches ``target``, else None."""
        for row in self.rows:
            if row["mean_accuracy"] >= target:
                return row["round"]
        return None

    def metrics_columns(self):
        n = self.config.num_clients
        return (["t", "round", "mean_loss", "mean_accuracy"]
                + [f"loss_{i}" for i in range(n)]
                + [f"accuracy_{i}" for i in range(n)]
                + [f"cluster_{i}" for i in range(n)]
                + ["uplink_bits", "downlink_bits"])

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.metrics_columns()
        w.writerow(cols)
        for row in self.rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        return buf.getvalue()

    def summary(self):
        last = self.rows[-1] if self.rows else {}
        return {
            "sparsifier": self.config.sparsifier,
            "seed": self.config.seed,
            "dim": self.config.dim,
            "global_rounds": len(self.rows),
            "recluster_events": [e.t for e in self.events],
            "final_mean_accuracy": last.get("mean_accuracy"),
            "final_mean_loss": last.get("mean_loss"),
            "rounds_to_target": self.rounds_to_accuracy(self.config.target_accuracy),
            "target_accuracy": self.config.target_accuracy,
            "clusters": [list(m) for m in self.clusters.members.values()],
            "uplink_bits": self.ledger.uplink,
            "downlink_bits": self.ledger.downlink,
        }

    def save(self, out_dir):
        """Write metrics.csv, report.json, config.yaml, checkpoint.bin and recluster matrices."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(self.metrics_csv())
        (out / "report.json").write_text(json.dumps(self.summary(), indent=2) + "\n")
        self.config.dump(out / "config.yaml")
        with open(out / "checkpoint.bin", "wb") as fh:
            write_checkpoint(fh, self.config.model_spec, self.theta, self.clusters, self.freqs)
        for ev in self.events:
            clustering.write_matrix_csv(out / f"similarity_t{ev.t:06d}.csv", ev.similarity)
            clustering.write_matrix_csv(out / f"distance_t{ev.t:06d}.csv", ev.distance)
        return out


def write_checkpoint(fh, spec, theta, clusters, freqs):
    """Model block, then clusters (u32 count; per cluster u32 size, u32 ids, counts
    block of ages), then u32 client count and one counts block of frequencies each."""
    fh.write(CHECKPOINT_MAGIC)
    learner.write_model(fh, spec, theta)
    fh.write(struct.pack("<I", len(clusters.members)))
    for cid in sorted(clusters.members):
        mem = clusters.members[cid]
        fh.write(struct.pack(f"<I{len(mem)}I", len(mem), *mem))
        aging.write_counts(fh, clusters.ages[cid])
    fh.write(struct.pack("<I", len(freqs)))
    for f in freqs:
        aging.write_counts(fh, f)


def read_checkpoint(fh):
    if fh.read(4) != CHECKPOINT_MAGIC:
        raise ValueError("not a run checkpoint")
    spec, theta = learner.read_model(fh)
    (n_clusters,) = struct.unpack("<I", fh.read(4))
    members, ages = {}, {}
    for _ in range(n_clusters):
        (size,) = struct.unpack("<I", fh.read(4))
        mem = struct.unpack(f"<{size}I", fh.read(4 * size))
        members[mem[0]] = tuple(mem)
        ages[mem[0]] = aging.read_counts(fh)
    (n,) = struct.unpack("<I", fh.read(4))
    freqs = np.stack([aging.read_counts(fh) for _ in range(n)])
    return spec, theta, clustering.ClusterState(members, ages), freqs


def load_client_data(config: RunConfig):
    """Source data per the config, sharded by its plan."""
    if config.data == "synthetic":
        X, y = synth_generate(config.num_classes, config.input_dim, config.per_class_count,
                              config.separation, np.random.SeedSequence(config.seed, spawn_key=(STREAM_DATA,)))
    else:
        X, y = load_mnist(config.mnist_images, config.mnist_labels)
    plan = ShardPlan(tuple(config.shard_plan))
    shard_seed = np.random.SeedSequence(config.seed, spawn_key=(STREAM_SHARD,))
    return shard(X, y, plan, shard_seed, overlap=config.overlap)


class Simulation:
    def __init__(self, config: RunConfig, datasets=None, observer=None):
        self.config = config.validate()
        self.spec = config.model_spec
        self.d = self.spec.num_params
        self.sparsifier = config.make_sparsifier()
        self.budgets = config.budgets
        self.observer = observer
        datasets = load_client_data(config) if datasets is None else datasets
        if len(datasets) != config.num_clients:
            raise ValueError("one dataset per client is required")

        self.theta = learner.init_params(self.spec, seed_stream(config.seed, STREAM_INIT))
        self.ps_optimizer = self._optimizer(config.ps_optimizer, config.ps_lr)
        self.clients = [
            Client(
                cid=i,
                batcher=Batcher(ds, config.batch_size, seed_stream(config.seed, STREAM_BATCH, i)),
                theta=self.theta.copy(),
                optimizer=self._optimizer(config.optimizer, config.lr),
                rng=seed_stream(config.seed, STREAM_SPARSIFY, i),
            )
            for i, ds in enumerate(datasets)
        ]
        self.clusters = clustering.ClusterState.singletons(config.num_clients, self.d)
        self.freqs = np.zeros((config.num_clients, self.d), dtype=np.int64)
        self.ledger = CommLedger(config.num_clients, self.d, config.value_bits)
        self.rows = []
        self.events = []
        self.rounds_done = 0

    def _optimizer(self, kind, lr):
        c = self.config
        if kind == "adam":
            return learner.Adam(lr, c.adam_beta1, c.adam_beta2, c.adam_eps)
        return learner.SGD(lr)

    def run(self) -> RunReport:
        c = self.config
        for t in range(1, c.iterations + 1):
            for client in self.clients:
                client.local_step(self.spec)
            if t % c.local_steps == 0:
                self.global_round(t)
                if t % c.recluster_period == 0 and isinstance(self.sparsifier, sparsifiers.RAgeK):
                    self.recluster(t)
                self.rows.append(self._metrics_row(t))
        return RunReport(c, self.rows, self.clusters, self.ledger, self.events,
                         self.theta, self.freqs)

    def _request_ragek(self, grads):
        """Per cluster, choose requested sets from the reported top-r candidates
        and age the cluster vector once with the union of its requests."""
        r = self.sparsifier.r
        cands = [sparsifiers.top_r_indices(g, r) for g in grads]
        requested = [None] * len(grads)
        before = {cid: a.copy() for cid, a in self.clusters.ages.items()}
        for cid in sorted(self.clusters.members):
            members = self.clusters.members[cid]
            ages = self.clusters.ages[cid]
            mags = [np.abs(grads[m][cands[m]]) for m in members]
            if self.config.disjoint and len(members) >= 2:
                reqs = aging.assign_disjoint_requests(
                    ages, [cands[m] for m in members], [self.budgets[m] for m in members], mags)
            else:
                reqs = [np.sort(aging.rank_by_age(cands[m], ages, mag)[:self.budgets[m]])
                        for m, mag in zip(members, mags)]
            for m, req in zip(members, reqs):
                requested[m] = req
            union = reduce(np.union1d, reqs)
            self.clusters.ages[cid] = aging.age_update(ages, union)
        return cands, requested, before

    def global_round(self, t):
        grads = [client.gradient_for_report(self.spec) for client in self.clients]
        round_idx = self.rounds_done + 1
        cands, before = None, None
        if isinstance(self.sparsifier, sparsifiers.RAgeK):
            cands, requested, before = self._request_ragek(grads)
            updates = [SparseUpdate(self.d, req, g[req], requested=req) for g, req in zip(grads, requested)]
            reported = self.sparsifier.r
        else:
            if isinstance(self.sparsifier, sparsifiers.RTopK):
                updates = [sparsifiers.r_top_k_sparsify(g, self.sparsifier.r, self.sparsifier.k, cl.rng)
                           for g, cl in zip(grads, self.clients)]
            else:
                updates = [sparsifiers.top_k_sparsify(g, self.sparsifier.k) for g in grads]
            requested = [u.indices for u in updates]
            reported = 0

        for i, (u, req) in enumerate(zip(updates, requested)):
            self.freqs[i] = aging.record_request(self.freqs[i], req)
            self.ledger.record(round_idx, i, reported, len(u), len(req) if reported else 0)

        g_total = aggregate(updates, self.d) * self.config.scale
        self.theta = self.ps_optimizer.apply(self.theta, g_total)
        for client in self.clients:
            client.theta = self.theta.copy()
            if self.config.reset_local_optimizer:
                client.optimizer.reset()
        self.rounds_done = round_idx

        if self.observer is not None:
            self.observer(RoundRecord(
                t=t, round=round_idx, candidates=cands, requested=requested,
                ages_before=before,
                ages_after={cid: a.copy() for cid, a in self.clusters.ages.items()},
                members=dict(self.clusters.members), freqs=self.freqs.copy(),
                aggregated=g_total,
            ))

    def recluster(self, t):
        self.clusters, S, dist = clustering.recluster(
            self.clusters, self.freqs, self.config.eps, self.config.min_pts)
        self.events.append(ReclusterEvent(t, S, dist, self.clusters.labels()))
        log.debug("t=%d clusters=%s", t, list(self.clusters.members.values()))

    def _metrics_row(self, t):
        row = {"t": t, "round": self.rounds_done}
        accs, losses = [], []
        for client in self.clients:
            acc, loss = learner.evaluate(self.spec, self.theta, client.data.features, client.data.labels)
            accs.append(acc)
            losses.append(loss)
        row["mean_loss"] = float(np.mean(losses))
        row["mean_accuracy"] = float(np.mean(accs))
        labels = self.clusters.labels()
        for i in range(len(self.clients)):
            row[f"loss_{i}"] = losses[i]
            row[f"accuracy_{i}"] = accs[i]
            row[f"cluster_{i}"] = int(labels[i])
        row["uplink_bits"] = self.ledger.total_uplink
        row["downlink_bits"] = self.ledger.total_downlink
        return row


def run(config: RunConfig, datasets=None, observer=None) -> RunReport:
    return Simulation(config, datasets=datasets, observer=observer).run()
