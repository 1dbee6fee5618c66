"""Channel and adversary models for the edge -> central hop.

* blind box: the server receives packets by uniform random sampling and
  cannot choose their origin (uncoded collection is a coupon collector;
  coded collection only needs K innovative combinations)
* lossy: independent per-packet erasures
* eavesdropper: an attacker holding m coded packets, audited exactly by
  Gaussian elimination on the intercepted coefficient rows
"""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codec import CodedPacket, DecoderState
from .galois import FieldSpec


@dataclass(frozen=True)
class ChannelConfig:
    mode: str = "direct"        # direct | blind_box | lossy
    loss_prob: float = 0.0
    redundancy: int = 0
    max_draws: int = 10_000

    def __post_init__(self):
        if self.mode not in ("direct", "blind_box", "lossy"):
            raise ValueError(f"unknown channel mode {self.mode!r}")
        if not 0.0 <= self.loss_prob < 1.0:
            raise ValueError("loss_prob must lie in [0, 1)")
        if self.redundancy < 0:
            raise ValueError("redundancy must be >= 0")
        if self.max_draws < 1:
            raise ValueError("max_draws must be >= 1")

    def validate_for(self, k: int):
        if self.max_draws < k:
            raise ValueError(f"max_draws={self.max_draws} is below K={k}")


@dataclass(frozen=True)
class EavesdropReport:
    intercepted_count: int
    rank: int
    recoverable_indices: frozenset = field(default_factory=frozenset)
    k: int = 0

    @property
    def full_decode(self) -> bool:
        return self.rank == self.k


def blind_box_draw(k: int, rng: np.random.Generator, max_draws: int = None):
    """Draw uniformly (with replacement) among k packet types until all are
    seen or the budget runs out.  Returns ``(draws, first-seen order)``."""
    seen = []
    seen_set = set()
    draws = 0
    while len(seen) < k and (max_draws is None or draws < max_draws):
        i = int(rng.integers(k))
        draws += 1
        if i not in seen_set:
            seen_set.add(i)
            seen.append(i)
    return draws, seen


def blind_box_collect_uncoded(k: int, rng: np.random.Generator) -> int:
    if k < 1:
        raise ValueError("K must be >= 1")
    return blind_box_draw(k, rng)[0]


def blind_box_collect_coded(k: int, spec: FieldSpec, rng: np.random.Generator,
                            max_draws: int = None) -> int:
    """Draw fresh uniform coding vectors into a decoder until rank K."""
    if k < 1:
        raise ValueError("K must be >= 1")
    state = DecoderState(k, spec)
    draws = 0
    while not state.complete and (max_draws is None or draws < max_draws):
        state.absorb_vector(spec.random_symbols(rng, k))
        draws += 1
    return draws


def uncoded_draws_batch(k: int, trials: int, rng: np.random.Generator, block: int = 100_000) -> np.ndarray:
    """Vectorized Monte Carlo of :func:`blind_box_collect_uncoded`."""
    chunk = int(4 * k * (np.log(k) + 1)) + 16
    out = np.empty(trials, dtype=np.int64)
    for lo in range(0, trials, block):
        n = min(block, trials - lo)
        draws = rng.integers(k, size=(n, chunk), dtype=np.int16)
        first = np.empty((n, k), dtype=np.int64)
        for j in range(k):
            hit = draws == j
            first[:, j] = np.where(hit.any(axis=1), hit.argmax(axis=1), chunk)
        last = first.max(axis=1)
        out[lo:lo + n] = last + 1
        # rare stragglers: keep drawing one at a time
        for i in np.flatnonzero(last == chunk):
            seen = set(draws[i].tolist())
            count = chunk
            while len(seen) < k:
                seen.add(int(rng.integers(k)))
                count += 1
            out[lo + i] = count
    return out


def coded_draws_batch(k: int, spec: FieldSpec, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Monte Carlo of :func:`blind_box_collect_coded`.

    Each trial keeps an echelon basis indexed by pivot column; a new vector
    is reduced column by column and stored at its first surviving column.
    """
    basis = np.zeros((trials, k, k), dtype=spec.dtype)
    have = np.zeros((trials, k), dtype=bool)
    rank = np.zeros(trials, dtype=np.int64)
    draws = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    while active.size:
        v = spec.random_symbols(rng, (active.size, k))
        draws[active] += 1
        placed = np.zeros(active.size, dtype=bool)
        for col in range(k):
            c = v[:, col]
            live = (c != 0) & ~placed
            if not live.any():
                continue
            h = have[active, col]
            red = live & h
            if red.any():
                rows = basis[active[red], col]
                v[red] ^= spec.mul_arrays(c[red][:, None], rows)
            new = live & ~h
            if new.any():
                lead = spec.inv_array(v[new, col])
                basis[active[new], col] = spec.mul_arrays(lead[:, None], v[new])
                have[active[new], col] = True
                placed |= new
        rank[active[placed]] += 1
        active = active[rank[active] < k]
    return draws


def transmit_lossy(packets: Sequence[CodedPacket], cfg: ChannelConfig, rng: np.random.Generator) -> list:
    """Drop each packet independently with probability ``cfg.loss_prob``."""
    if cfg.loss_prob == 0:
        return list(packets)
    keep = rng.random(len(packets)) >= cfg.loss_prob
    return [p for p, k in zip(packets, keep) if k]


def eavesdrop_audit(intercepted: Sequence, k: int, spec: FieldSpec) -> EavesdropReport:
    """Rank of the intercepted rows and which original packets they isolate.

    In reduced row-echelon form a unit vector e_j lies in the row space
    exactly when some stored row equals e_j.
    """
    state = DecoderState(k, spec)
    gen = None
    for cp in intercepted:
        vec = cp.vector if isinstance(cp, CodedPacket) else cp
        if isinstance(cp, CodedPacket):
            if gen is None:
                gen = cp.generation
            elif cp.generation != gen:
                raise ValueError("intercepted packets span several generations")
        state.absorb_vector(vec)
    rows = state.rows
    recoverable = set()
    for col, i in state.pivot_map.items():
        if np.count_nonzero(rows[i]) == 1:
            recoverable.add(col)
    return EavesdropReport(len(intercepted), state.rank, frozenset(recoverable), k)


def any_recoverable_batch(m: int, k: int, spec: FieldSpec, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Per-trial flag: do m uniform random coding vectors isolate some original packet?"""
    out = np.zeros(trials, dtype=bool)
    for t in range(trials):
        vecs = spec.random_symbols(rng, (m, k))
        out[t] = bool(eavesdrop_audit(list(vecs), k, spec).recoverable_indices)
    return out
