"""FedAvg and FedNC round orchestration.

Both schemes share participant selection and local training, drawn from
streams labelled by round and client id, so a FedNC round that decodes
produces exactly the FedAvg aggregate.  Aggregation is over the
participants only, with client weights renormalized over that set and
summed in ascending client-id order.
"""
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import codec, netsim
from .errors import BadWeights, InsufficientData, ShapeMismatch
from .galois import FieldSpec
from .model import (
    Dataset,
    ModelParams,
    TrainConfig,
    evaluate,
    packet_to_params,
    params_to_packet,
    train,
)
from .netsim import ChannelConfig
from .seeding import seed_stream


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 100
    participants: int = 10
    rounds: int = 100
    client_weights: Optional[tuple] = None   # None: proportional to local dataset sizes
    partition: str = "iid"
    shards_per_client: int = 2
    iid_fraction: float = 0.05
    field: FieldSpec = field(default_factory=lambda: FieldSpec(8))
    scheme: str = "fedavg"

    def __post_init__(self):
        if not 1 <= self.participants <= self.n_clients:
            raise ValueError("need 1 <= participants <= n_clients")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.partition not in ("iid", "mixed_non_iid"):
            raise ValueError(f"unknown partition {self.partition!r}")
        if self.shards_per_client < 1:
            raise ValueError("shards_per_client must be >= 1")
        if not 0.0 <= self.iid_fraction <= 1.0:
            raise ValueError("iid_fraction must lie in [0, 1]")
        if self.scheme not in ("fedavg", "fednc"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.client_weights is not None:
            w = np.asarray(self.client_weights, dtype=np.float64)
            if w.size != self.n_clients or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("client_weights must be N non-negative reals summing to 1")

    @property
    def K(self) -> int:
        return self.participants


@dataclass
class RoundMetrics:
    round: int
    scheme: str
    participants: tuple
    decode_success: bool
    packets_drawn: int
    rank_at_stop: int
    test_accuracy: float
    train_loss: float
    wallclock: float = 0.0


@dataclass
class FederationState:
    global_model: ModelParams
    clients: list
    test: Dataset
    round: int = 0
    history: list = field(default_factory=list)

    def client_weights(self, cfg: FederationConfig) -> np.ndarray:
        if cfg.client_weights is not None:
            return np.asarray(cfg.client_weights, dtype=np.float64)
        sizes = np.array([len(c) for c in self.clients], dtype=np.float64)
        return sizes / sizes.sum()


def partition_data(full: Dataset, cfg: FederationConfig, rng: np.random.Generator) -> list:
    """Split ``full`` into N disjoint client datasets."""
    n = len(full)
    N = cfg.n_clients
    if n < N:
        raise InsufficientData(f"{n} samples cannot cover {N} clients")
    order = rng.permutation(n)
    if cfg.partition == "iid":
        return [full.subset(part) for part in np.array_split(order, N)]

    n_iid = int(round(cfg.iid_fraction * n))
    iid_idx, rest = order[:n_iid], order[n_iid:]
    n_shards = N * cfg.shards_per_client
    shards = []
    if rest.size:
        labels = full.labels[rest]
        classes, counts = np.unique(labels, return_counts=True)
        if n_shards < classes.size:
            raise InsufficientData(f"{n_shards} shards cannot hold {classes.size} classes")
        # largest-remainder allocation of shards to classes, at least one each
        quota = counts / counts.sum() * n_shards
        alloc = np.maximum(np.floor(quota).astype(int), 1)
        while alloc.sum() > n_shards:
            cand = np.flatnonzero(alloc > 1)
            alloc[cand[np.argmin((quota - alloc)[cand])]] -= 1
        while alloc.sum() < n_shards:
            alloc[np.argmax(quota - alloc)] += 1
        if (alloc > counts).any():
            raise InsufficientData("a class has fewer samples than its single-class shards")
        for c, a in zip(classes, alloc):
            members = rest[labels == c]
            shards.extend(np.array_split(members, a))
        shards = [shards[i] for i in rng.permutation(len(shards))]
    parts = []
    iid_parts = np.array_split(iid_idx, N)
    for k in range(N):
        own = shards[k * cfg.shards_per_client:(k + 1) * cfg.shards_per_client] if shards else []
        parts.append(np.concatenate(own + [iid_parts[k]]).astype(np.int64))
    if any(p.size == 0 for p in parts):
        raise InsufficientData("some client received no samples")
    return [full.subset(p) for p in parts]


def select_participants(cfg: FederationConfig, t: int, seed: int) -> tuple:
    """Uniform sample of K client ids without replacement, sorted ascending."""
    rng = seed_stream(seed, "round", t, "select")
    ids = rng.choice(cfg.n_clients, size=cfg.participants, replace=False)
    return tuple(sorted(int(i) for i in ids))


def aggregate(params: Sequence[ModelParams], weights: Sequence[float], ids: Sequence[int] = None) -> ModelParams:
    """Weighted coordinate-wise mean, accumulated in float64 left to right.

    Weights are renormalized to sum to one; with ``ids`` the terms are first
    ordered by ascending id.
    """
    if not params:
        raise ShapeMismatch("nothing to aggregate")
    tag = params[0].shape_tag
    size = params[0].values.size
    for p in params:
        if p.shape_tag != tag or p.values.size != size:
            raise ShapeMismatch("cannot aggregate parameters of different shapes")
    w = np.asarray(weights, dtype=np.float64)
    if w.size != len(params) or (w < 0).any() or not np.isfinite(w).all() or w.sum() <= 0:
        raise BadWeights(f"invalid aggregation weights {weights!r}")
    w = w / w.sum()
    order = range(len(params)) if ids is None else np.argsort(np.asarray(ids), kind="stable")
    acc = np.zeros(size, dtype=np.float64)
    for i in order:
        acc += w[i] * params[i].values.astype(np.float64)
    return ModelParams(acc.astype(np.float32), tag)


def _train_participants(state, cfg, tcfg, seed, t):
    ids = select_participants(cfg, t, seed)
    trained, losses = [], []
    for k in ids:
        rng = seed_stream(seed, "round", t, "client", k)
        w, loss = train(state.global_model, state.clients[k], tcfg, rng)
        trained.append(w)
        losses.append(loss)
    return ids, trained, float(np.mean(losses))


def _aggregate_subset(state, cfg, ids, trained, chosen):
    pk = state.client_weights(cfg)
    chosen = sorted(chosen)
    return aggregate([trained[i] for i in chosen], [pk[ids[i]] for i in chosen], [ids[i] for i in chosen])


def run_fedavg_round(state: FederationState, cfg: FederationConfig, tcfg: TrainConfig,
                     channel: ChannelConfig, seed: int):
    """One FedAvg round; returns ``(new global model, RoundMetrics)``.

    Blind-box channel: the server samples participant packets uniformly with
    replacement until it holds all K or ``channel.max_draws`` is spent, then
    aggregates whatever distinct packets it holds.
    """
    start = time.perf_counter()
    t = state.round + 1
    ids, trained, loss = _train_participants(state, cfg, tcfg, seed, t)
    K = len(ids)
    crng = seed_stream(seed, "round", t, "channel")
    if channel.mode == "blind_box":
        drawn, chosen = netsim.blind_box_draw(K, crng, channel.max_draws)
    elif channel.mode == "lossy":
        keep = crng.random(K) >= channel.loss_prob
        chosen = list(np.flatnonzero(keep))
        drawn = K
    else:
        chosen, drawn = list(range(K)), K
    if chosen:
        new = _aggregate_subset(state, cfg, ids, trained, chosen)
    else:
        new = state.global_model
    metrics = RoundMetrics(t, "fedavg", ids, bool(chosen), drawn, len(chosen),
                           evaluate(new, state.test), loss, time.perf_counter() - start)
    return new, metrics


VectorSource = Callable[[int, np.random.Generator], tuple]


def run_fednc_round(state: FederationState, cfg: FederationConfig, tcfg: TrainConfig,
                    channel: ChannelConfig, seed: int, vector_source: VectorSource = None):
    """One FedNC round; returns ``(new global model, RoundMetrics)``.

    The edge encodes the K participant packets with fresh uniform coding
    vectors (``vector_source(i, rng)`` overrides the draw).  Direct and lossy
    channels carry K + redundancy coded packets; the blind-box channel emits
    fresh combinations until the decoder is complete or the draw budget is
    spent.  Without full rank the global model is carried over unchanged.
    """
    start = time.perf_counter()
    t = state.round + 1
    ids, trained, loss = _train_participants(state, cfg, tcfg, seed, t)
    K = len(ids)
    spec = cfg.field
    packets = [params_to_packet(w, k, t) for w, k in zip(trained, ids)]
    vrng = seed_stream(seed, "round", t, "coding")
    if vector_source is None:
        def vector_source(i, rng):
            return codec.random_coding_vector(K, spec, rng)

    decoder = codec.DecoderState(K, spec, generation=t)
    if channel.mode == "blind_box":
        drawn = 0
        while not decoder.complete and drawn < channel.max_draws:
            decoder.absorb(codec.encode(packets, vector_source(drawn, vrng), spec))
            drawn += 1
    else:
        n_send = K + channel.redundancy
        coded = [codec.encode(packets, vector_source(i, vrng), spec) for i in range(n_send)]
        if channel.mode == "lossy":
            coded = netsim.transmit_lossy(coded, channel, seed_stream(seed, "round", t, "channel"))
        for cp in coded:
            decoder.absorb(cp)
        drawn = n_send

    if decoder.complete:
        decoded = decoder.extract(ids)
        params = [packet_to_params(p, state.global_model.shape_tag) for p in decoded]
        new = _aggregate_subset(state, cfg, ids, params, range(K))
    else:
        new = state.global_model
    metrics = RoundMetrics(t, "fednc", ids, decoder.complete, drawn, decoder.rank,
                           evaluate(new, state.test), loss, time.perf_counter() - start)
    return new, metrics


def run_round(state, cfg, tcfg, channel, seed, scheme=None):
    scheme = scheme or cfg.scheme
    if scheme == "fedavg":
        return run_fedavg_round(state, cfg, tcfg, channel, seed)
    return run_fednc_round(state, cfg, tcfg, channel, seed)


def run_federation(state: FederationState, cfg: FederationConfig, tcfg: TrainConfig,
                   channel: ChannelConfig, seed: int, scheme: str = None, rounds: int = None) -> list:
    """Run ``rounds`` (default ``cfg.rounds``) rounds, updating ``state`` in place."""
    channel.validate_for(cfg.participants)
    out = []
    for _ in range(cfg.rounds if rounds is None else rounds):
        new, m = run_round(state, cfg, tcfg, channel, seed, scheme)
        state.global_model = new
        state.round = m.round
        state.history.append(m)
        out.append(m)
    return out
