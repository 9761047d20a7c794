"""
Decode-and-forward chains of PSBA segments.

Node ``i`` and node ``i+1`` share segment ``i``'s SCG pool. A repeater
decodes the bit from its incoming segment and re-encodes it into the next
one. Latency is pure bookkeeping: each hop costs its decode delay, the
quantum hop itself is counted as instantaneous (the protocol's premise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .optics import AnalyzerConfig
from .protocol import (
    DecisionRule,
    PhysicsMode,
    SCGPool,
    bob_event_distribution,
    calibrate_rc,
    decode_bit,
    encode_bit,
    provision_scg_pool,
)
from .quantum import BellKind
from .rng import Streams
from .stats import binary_channel_capacity, binomial_tail, threshold_count

SECONDS_PER_LIGHT_MONTH = 365.25 * 86400 / 12


@dataclass(frozen=True)
class ChainConfig:
    nodes: tuple[str, ...]
    hop_delay_s: float = 1e-3
    hop_distance_ls: float = 0.0
    mode: PhysicsMode = PhysicsMode.PAPER_IDEALIZED

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a chain needs at least two nodes")
        if self.hop_delay_s < 0 or self.hop_distance_ls < 0:
            raise ValueError("delays and distances must be non-negative")

    @property
    def n_hops(self) -> int:
        return len(self.nodes) - 1

    @classmethod
    def with_hops(cls, hops: int, **kw) -> "ChainConfig":
        names = ("alice", "bob", "charlie", "dave", "erin", "frank")
        nodes = tuple(names[i] if i < len(names) else f"node{i}" for i in range(hops + 1))
        return cls(nodes, **kw)


@dataclass
class HopSegment:
    upstream: str
    downstream: str
    pool: SCGPool
    rule: DecisionRule
    mode: PhysicsMode
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)

    @property
    def r_c(self) -> int:
        return self.pool.r_c


@dataclass
class Chain:
    config: ChainConfig
    segments: list

    def __post_init__(self):
        if len(self.segments) != self.config.n_hops:
            raise ValueError("one segment per hop required")
        pools = [id(seg.pool) for seg in self.segments]
        if len(set(pools)) != len(pools):
            raise ValueError("adjacent segments must not share a pool")


def build_chain(config: ChainConfig, n_bits: int, r_c: int | Sequence[int] | None = None,
                rule: DecisionRule | None = None, analyzer: AnalyzerConfig = AnalyzerConfig(),
                source: BellKind = BellKind.PSI_MINUS, *, p_target: float = 0.99) -> Chain:
    """Provision one pool of ``n_bits`` SCGs per hop; ``r_c`` may differ per hop."""
    r_default, rule_default = calibrate_rc(p_target)
    rule = rule or rule_default
    if r_c is None:
        r_cs = [r_default] * config.n_hops
    elif isinstance(r_c, int):
        r_cs = [r_c] * config.n_hops
    else:
        r_cs = list(r_c)
        if len(r_cs) != config.n_hops:
            raise ValueError("need one r_c per hop")
    segments = []
    for i, r in enumerate(r_cs):
        pool = provision_scg_pool(n_bits, r, source, tag=i)
        segments.append(HopSegment(config.nodes[i], config.nodes[i + 1], pool, rule, config.mode, analyzer))
    return Chain(config, segments)


@dataclass(frozen=True)
class RelayResult:
    bits: tuple[int, ...]  # bit as held at each node, sender first
    latency_s: float

    @property
    def delivered(self) -> int:
        return self.bits[-1]


def relay_bit(bit: int, chain: Chain, streams: Streams) -> RelayResult:
    bits = [bit]
    latency = 0.0
    current = bit
    for seg in chain.segments:
        encode_bit(current, seg.pool.next_for_alice(), streams)
        current = decode_bit(seg.pool.next_for_bob(), seg.analyzer, seg.rule, seg.mode, streams).bit
        latency += chain.config.hop_delay_s
        bits.append(current)
    return RelayResult(tuple(bits), latency)


@dataclass(frozen=True)
class LatencyReport:
    psba_latency_s: float
    light_time_s: float
    speedup: float
    capacity_bits: float


def hop_transition(segment: HopSegment) -> tuple[float, float]:
    """Exact (P(decode 1 | sent 1), P(decode 1 | sent 0)) for one hop."""
    r = segment.r_c
    k_t = threshold_count(r, segment.rule.threshold)
    out = []
    for sent in (1, 0):
        p = bob_event_distribution(sent, segment.analyzer, segment.mode, segment.pool.source)["different"]
        out.append(binomial_tail(r, p, 0, k_t - 1))
    return out[0], out[1]


def end_to_end_transition(chain: Chain) -> tuple[float, float]:
    """Compose the per-hop binary channels (bit errors may cancel across hops)."""
    p11, p10 = 1.0, 0.0
    for seg in chain.segments:
        a, b = hop_transition(seg)
        p11, p10 = p11 * a + (1 - p11) * b, p10 * a + (1 - p10) * b
    return p11, p10


def latency_report(chain: Chain) -> LatencyReport:
    cfg = chain.config
    latency = cfg.hop_delay_s * cfg.n_hops
    light = cfg.hop_distance_ls * cfg.n_hops
    speedup = light / latency if latency > 0 else float("inf")
    if any(seg.mode is PhysicsMode.PHYSICAL for seg in chain.segments):
        capacity = 0.0
    else:
        capacity = binary_channel_capacity(*end_to_end_transition(chain))
    return LatencyReport(latency, light, speedup, capacity)
