"""
Entanglement groups, bit encoding by BSM vs SSM, and Bob's statistical decoder.

Each entanglement group (EG) is one four-photon record: photons 1&2 and
3&4 come from two sources, Alice holds 2&3 and Bob holds 1&4. An SCG is a
block of ``r_c`` consecutive EGs and carries one bit.

Bob's decoder only ever sees the reduced state of his own photons. How
that state is turned into beam-splitter statistics depends on the
``PhysicsMode``:

* ``PHYSICAL``: the true reduced state at the analyzer's visibility.
* ``PAPER_IDEALIZED``: entangled pairs at the analyzer's visibility,
  separable pairs treated as fully distinguishable (visibility 0), which
  is the protocol's own working assumption.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .optics import (
    AnalyzerConfig,
    Setup,
    bs_different_port_probability,
    pbs_correlation,
    pbs_event_distribution,
    sample_pbs_outcomes,
)
from .quantum import (
    Actor,
    BellKind,
    JointState,
    MeasurementKind,
    MeasurementRecord,
    Outcome,
    bell_state,
    bsm,
    bsm_branches,
    choose_branch,
    is_separable,
    mixture,
    partial_trace,
    ssm,
    ssm_branches,
    tensor,
)
from .rng import Streams
from .stats import hoeffding_bound, wilson_interval

ALICE_PHOTONS = (2, 3)
BOB_PHOTONS = (1, 4)
SSM_ANGLE = 0.0
MAX_POOL_EGS = 20_000_000
LENGTH_FIELD_BITS = 8


class PhysicsMode(enum.Enum):
    PAPER_IDEALIZED = "paper"
    PHYSICAL = "physical"

    @classmethod
    def parse(cls, text: "str | PhysicsMode") -> "PhysicsMode":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        for mode in cls:
            if key in (mode.value, mode.name.lower()):
                return mode
        raise ValueError(f"unknown physics mode {text!r} (expected 'paper' or 'physical')")


class ProtocolError(RuntimeError):
    pass


class SingleUseError(ProtocolError):
    """An EG or SCG was measured a second time."""


class PoolExhausted(ProtocolError):
    pass


# -- bookkeeping types ------------------------------------------------------

@dataclass(slots=True, eq=False)
class EntanglementGroup:
    index: int
    state: JointState
    alice_photons: tuple = ALICE_PHOTONS
    bob_photons: tuple = BOB_PHOTONS
    consumed: bool = False
    analyzed: bool = False

    def bob_pair(self) -> JointState:
        return partial_trace(self.state, self.bob_photons)


@dataclass(eq=False)
class StatisticalCorrectionGroup:
    index: int
    egs: list
    tag: int = 0
    consumed: bool = False
    analyzed: bool = False

    def __post_init__(self):
        if not self.egs:
            raise ValueError("an SCG needs at least one EG")
        first = self.egs[0].index
        if [eg.index for eg in self.egs] != list(range(first, first + len(self.egs))):
            raise ValueError("EG indices in an SCG must be contiguous and ascending")

    @property
    def r_c(self) -> int:
        return len(self.egs)


@dataclass(eq=False)
class SCGPool:
    """The shared, ordered SCG sequence. Alice and Bob each walk it with their own cursor."""

    scgs: list
    r_c: int
    source: BellKind = BellKind.PSI_MINUS
    tag: int = 0
    _alice_pos: int = field(default=0, repr=False)
    _bob_pos: int = field(default=0, repr=False)

    def __len__(self):
        return len(self.scgs)

    def alice_available(self) -> int:
        return sum(1 for s in self.scgs[self._alice_pos:] if not (s.consumed or s.analyzed))

    def bob_available(self) -> int:
        return sum(1 for s in self.scgs[self._bob_pos:] if not s.analyzed)

    def next_for_alice(self) -> StatisticalCorrectionGroup:
        for i in range(self._alice_pos, len(self.scgs)):
            scg = self.scgs[i]
            if not (scg.consumed or scg.analyzed):
                self._alice_pos = i + 1
                return scg
        raise PoolExhausted("no unused SCG left for Alice")

    def next_for_bob(self) -> StatisticalCorrectionGroup:
        for i in range(self._bob_pos, len(self.scgs)):
            scg = self.scgs[i]
            if not scg.analyzed:
                self._bob_pos = i + 1
                return scg
        raise PoolExhausted("no unanalyzed SCG left for Bob")

    def peek_bob(self) -> list[StatisticalCorrectionGroup]:
        return [s for s in self.scgs[self._bob_pos:] if not s.analyzed]


@dataclass(frozen=True)
class DecisionRule:
    """Hard threshold on the different-port fraction.

    A fraction strictly below ``threshold`` reads as 1 (swapped Bell
    states, low coincidence rate); at or above reads as 0.
    """

    threshold: float
    certainty: float
    rate_one: float = 0.25
    rate_zero: float = 0.5

    def __post_init__(self):
        if not 0 < self.rate_one < self.rate_zero < 1:
            raise ValueError("need 0 < rate_one < rate_zero < 1")
        if not self.rate_one < self.threshold < self.rate_zero:
            raise ValueError("threshold must lie strictly between the two rates")
        if not 0.5 < self.certainty < 1:
            raise ValueError("certainty must lie in (0.5, 1)")

    def decide(self, fraction: float) -> int:
        return 1 if fraction < self.threshold else 0


def calibrate_rc(p_target: float, p_one: float = 0.25, p_zero: float = 0.5) -> tuple[int, DecisionRule]:
    """Block length at which the Hoeffding bound on the per-bit error is <= 1 - p_target.

    The threshold sits midway between the two different-port rates.
    """
    if not 0 < p_one < p_zero < 1:
        raise ValueError("need 0 < p_one < p_zero < 1")
    if not 0.5 < p_target < 1:
        raise ValueError("p_target must lie in (0.5, 1)")
    gap = (p_zero - p_one) / 2
    budget = 1 - p_target
    r = max(1, math.ceil(math.log(1 / budget) / (2 * gap * gap)))
    while r > 1 and hoeffding_bound(r - 1, gap) <= budget:
        r -= 1
    while hoeffding_bound(r, gap) > budget:
        r += 1
    return r, DecisionRule((p_one + p_zero) / 2, p_target, p_one, p_zero)


# -- pool provisioning ------------------------------------------------------

@functools.lru_cache(maxsize=16)
def source_state(source: BellKind = BellKind.PSI_MINUS) -> JointState:
    """Two independent SPDC pairs, photons (1,2) and (3,4)."""
    return tensor(bell_state(source, (1, 2)), bell_state(source, (3, 4)))


def provision_scg_pool(n_scg: int, r_c: int, source: BellKind = BellKind.PSI_MINUS,
                       *, tag: int = 0, start: int = 0) -> SCGPool:
    """Fresh pool of ``n_scg`` SCGs with ``r_c`` EGs each.

    SCG ``k`` holds EGs ``k*r_c .. k*r_c + r_c - 1``; ``start`` offsets
    the first SCG index so several pools can tile one global sequence.
    All EGs share the (immutable) source state object.
    """
    if n_scg < 1 or r_c < 1:
        raise ValueError("n_scg and r_c must be >= 1")
    if n_scg * r_c > MAX_POOL_EGS:
        raise ValueError(f"pool of {n_scg * r_c} EGs exceeds the {MAX_POOL_EGS} limit")
    state = source_state(source)
    scgs = []
    for k in range(start, start + n_scg):
        egs = [EntanglementGroup(k * r_c + i, state) for i in range(r_c)]
        scgs.append(StatisticalCorrectionGroup(k, egs, tag))
    return SCGPool(scgs, r_c, source, tag)


# -- Alice ------------------------------------------------------------------

def _claim(eg: EntanglementGroup):
    if eg.consumed:
        raise SingleUseError(f"EG {eg.index} was already measured by Alice")
    if eg.analyzed:
        raise SingleUseError(f"EG {eg.index} was already analyzed by Bob")


def encode_bit(bit: int, scg: StatisticalCorrectionGroup, streams: Streams) -> list[MeasurementRecord]:
    """Bit 1: BSM on photons 2&3 of every EG. Bit 0: H/V measurement of 2 and 3 separately.

    The returned records are Alice's private knowledge; nothing on Bob's
    side reads them.
    """
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    if scg.consumed or scg.analyzed:
        raise SingleUseError(f"SCG {scg.index} is already used")
    for eg in scg.egs:
        _claim(eg)
    rng = streams.substream(Actor.ALICE, scg.tag, scg.index)
    records = []
    if bit == 1:
        draws = rng.random(scg.r_c)
        for eg, u in zip(scg.egs, draws):
            br = choose_branch(bsm_branches(eg.state, eg.alice_photons), u)
            eg.state = br.state
            eg.consumed = True
            records.append(MeasurementRecord(Actor.ALICE, MeasurementKind.BSM, eg.alice_photons,
                                             br.outcome, 2 * eg.index))
    else:
        draws = rng.random((scg.r_c, 2))
        for eg, (u_a, u_b) in zip(scg.egs, draws):
            a, b = eg.alice_photons
            br_a = choose_branch(ssm_branches(eg.state, a, SSM_ANGLE), u_a)
            br_b = choose_branch(ssm_branches(br_a.state, b, SSM_ANGLE), u_b)
            eg.state = br_b.state
            eg.consumed = True
            records.append(MeasurementRecord(Actor.ALICE, MeasurementKind.SSM, (a,), br_a.outcome,
                                             2 * eg.index, SSM_ANGLE))
            records.append(MeasurementRecord(Actor.ALICE, MeasurementKind.SSM, (b,), br_b.outcome,
                                             2 * eg.index + 1, SSM_ANGLE))
    scg.consumed = True
    return records


# -- Bob --------------------------------------------------------------------

def effective_visibility(pair: JointState, analyzer: AnalyzerConfig, mode: PhysicsMode) -> float:
    if mode is PhysicsMode.PAPER_IDEALIZED and is_separable(pair):
        return 0.0
    return analyzer.visibility


@functools.lru_cache(maxsize=4096)
def bob_different_port_probability(pair: JointState, analyzer: AnalyzerConfig, mode: PhysicsMode) -> float:
    if analyzer.setup is not Setup.NON_POLARIZING_BS:
        raise ValueError("beam-splitter decoding needs the non-polarizing BS setup")
    return bs_different_port_probability(pair, effective_visibility(pair, analyzer, mode))


@dataclass(frozen=True)
class DecodeResult:
    bit: int
    n_diff: int
    n_same: int
    fraction: float
    scg_index: int

    @property
    def counts(self) -> tuple[int, int]:
        return self.n_diff, self.n_same

    def ci_95(self) -> tuple[float, float]:
        return wilson_interval(self.n_diff, self.n_diff + self.n_same)


def decode_bit(scg: StatisticalCorrectionGroup, analyzer: AnalyzerConfig, rule: DecisionRule,
               mode: PhysicsMode, streams: Streams) -> DecodeResult:
    """One beam-splitter event per EG of Bob's photons 1&4, then the threshold decision.

    Equivalent to calling ``sample_bs_event`` on every EG in order with
    the SCG's substream; the draws are just vectorized.
    """
    if not scg.egs:
        raise ProtocolError("cannot analyze an empty SCG")
    if scg.analyzed:
        raise SingleUseError(f"SCG {scg.index} was already analyzed")
    probs = np.empty(scg.r_c)
    for i, eg in enumerate(scg.egs):
        if eg.analyzed:
            raise SingleUseError(f"EG {eg.index} was already analyzed")
        probs[i] = bob_different_port_probability(eg.bob_pair(), analyzer, mode)
    rng = streams.substream(Actor.BOB, scg.tag, scg.index)
    n_diff = int(np.count_nonzero(rng.random(scg.r_c) < probs))
    for eg in scg.egs:
        eg.analyzed = True
    scg.analyzed = True
    fraction = n_diff / scg.r_c
    return DecodeResult(rule.decide(fraction), n_diff, scg.r_c - n_diff, fraction, scg.index)


# -- framing ----------------------------------------------------------------

def _as_bytes(text: bytes | str) -> bytes:
    return text.encode("utf-8") if isinstance(text, str) else bytes(text)


def bytes_to_bits(data: bytes) -> list[int]:
    return [(byte >> (7 - i)) & 1 for byte in data for i in range(8)]


def bits_to_bytes(bits: Sequence[int]) -> bytes:
    if len(bits) % 8:
        raise ValueError("bit count is not a multiple of 8")
    out = bytearray()
    for i in range(0, len(bits), 8):
        byte = 0
        for b in bits[i:i + 8]:
            byte = (byte << 1) | int(b)
        out.append(byte)
    return bytes(out)


def frame_message(payload: bytes | str) -> list[int]:
    """[length byte][payload], MSB first."""
    data = _as_bytes(payload)
    if len(data) > 255:
        raise ValueError(f"message of {len(data)} bytes does not fit the one-byte length field")
    return bytes_to_bits(bytes([len(data)]) + data)


@dataclass
class TranscriptEntry:
    position: int
    scg_index: int
    bit: int
    records: list


@dataclass
class Transcript:
    mode: PhysicsMode
    payload: bytes
    bits: list
    entries: list = field(default_factory=list)

    @property
    def scgs_used(self) -> int:
        return len(self.entries)


def send_message(text: bytes | str, pool: SCGPool, mode: PhysicsMode, streams: Streams,
                 *, flag: bool = False) -> Transcript:
    """Frame ``text`` and encode each bit into the next unused SCG.

    With ``flag``, a leading 1 bit announces the message to a polling
    receiver. ``mode`` only tags the transcript: Alice's physics is the
    same in both modes.
    """
    payload = _as_bytes(text)
    bits = ([1] if flag else []) + frame_message(payload)
    if pool.alice_available() < len(bits):
        raise PoolExhausted(f"message needs {len(bits)} SCGs, pool has {pool.alice_available()}")
    transcript = Transcript(PhysicsMode.parse(mode), payload, bits)
    for position, bit in enumerate(bits):
        scg = pool.next_for_alice()
        transcript.entries.append(TranscriptEntry(position, scg.index, bit, encode_bit(bit, scg, streams)))
    return transcript


@dataclass
class ReceiveReport:
    decodes: list = field(default_factory=list)

    @property
    def bits(self) -> list[int]:
        return [d.bit for d in self.decodes]

    @property
    def fractions(self) -> list[float]:
        return [d.fraction for d in self.decodes]

    @property
    def counts(self) -> list[tuple[int, int]]:
        return [d.counts for d in self.decodes]


def _decode_n(n: int, pool, analyzer, rule, mode, streams, report: ReceiveReport) -> list[int]:
    bits = []
    for _ in range(n):
        d = decode_bit(pool.next_for_bob(), analyzer, rule, mode, streams)
        report.decodes.append(d)
        bits.append(d.bit)
    return bits


def receive_message(pool: SCGPool, analyzer: AnalyzerConfig, rule: DecisionRule, mode: PhysicsMode,
                    streams: Streams) -> tuple[bytes, ReceiveReport]:
    """Decode the length byte, then that many payload bytes."""
    report = ReceiveReport()
    length = bits_to_bytes(_decode_n(LENGTH_FIELD_BITS, pool, analyzer, rule, mode, streams, report))[0]
    payload_bits = _decode_n(8 * length, pool, analyzer, rule, mode, streams, report)
    return bits_to_bytes(payload_bits), report


# -- polling ----------------------------------------------------------------

def polling_schedule(interval: float, pool: SCGPool) -> Iterator[tuple[float, int]]:
    """(poll time, SCG index) for Bob's remaining SCGs, one per ``interval``."""
    if not interval > 0:
        raise ValueError("polling interval must be positive")
    for k, scg in enumerate(pool.peek_bob(), start=1):
        yield k * interval, scg.index


@dataclass(frozen=True)
class PollResult:
    time: float
    scg_index: int
    bit: int
    fraction: float

    @property
    def start_flag(self) -> bool:
        """A 1 at a poll announces data in the following SCGs."""
        return self.bit == 1


def poll(pool: SCGPool, analyzer: AnalyzerConfig, rule: DecisionRule, mode: PhysicsMode,
         streams: Streams, interval: float, n_polls: int, *, stop_on_flag: bool = False) -> list[PollResult]:
    results = []
    schedule = polling_schedule(interval, pool)
    for _ in range(n_polls):
        try:
            t, index = next(schedule)
        except StopIteration:
            raise PoolExhausted("polling ran past the end of the pool") from None
        scg = pool.next_for_bob()
        assert scg.index == index
        d = decode_bit(scg, analyzer, rule, mode, streams)
        results.append(PollResult(t, index, d.bit, d.fraction))
        if stop_on_flag and d.bit == 1:
            break
    return results


@dataclass
class ListenResult:
    polls: list
    message: bytes | None
    report: ReceiveReport | None

    @property
    def start_poll(self) -> int | None:
        """1-based poll number at which the message body begins."""
        for k, p in enumerate(self.polls, start=1):
            if p.start_flag:
                return k + 1
        return None


def listen(pool: SCGPool, analyzer: AnalyzerConfig, rule: DecisionRule, mode: PhysicsMode,
           streams: Streams, interval: float, max_polls: int) -> ListenResult:
    """Poll until a start flag, then read one framed message."""
    polls = poll(pool, analyzer, rule, mode, streams, interval, max_polls, stop_on_flag=True)
    if not polls or not polls[-1].start_flag:
        return ListenResult(polls, None, None)
    message, report = receive_message(pool, analyzer, rule, mode, streams)
    return ListenResult(polls, message, report)


# -- bulk channel runs ------------------------------------------------------

@dataclass
class ChannelRun:
    sent: list
    decoded: list
    counts: list


def simulate_channel(bits: Sequence[int], r_c: int, rule: DecisionRule, mode: PhysicsMode,
                     streams: Streams, analyzer: AnalyzerConfig = AnalyzerConfig(),
                     source: BellKind = BellKind.PSI_MINUS, *, tag: int = 0, chunk: int = 256) -> ChannelRun:
    """Send each bit through its own SCG and decode it; pools are provisioned in chunks."""
    run = ChannelRun(list(bits), [], [])
    for start in range(0, len(run.sent), chunk):
        block = run.sent[start:start + chunk]
        pool = provision_scg_pool(len(block), r_c, source, tag=tag, start=start)
        for bit in block:
            encode_bit(bit, pool.next_for_alice(), streams)
            d = decode_bit(pool.next_for_bob(), analyzer, rule, mode, streams)
            run.decoded.append(d.bit)
            run.counts.append(d.counts)
    return run


def random_bits(n: int, streams: Streams, *key) -> list[int]:
    return [int(b) for b in streams.substream("message-bits", *key).integers(0, 2, n)]


# -- exact Bob-side statistics ----------------------------------------------

def bob_pair_ensemble(bit: int | None, source: BellKind = BellKind.PSI_MINUS) -> list[tuple[float, JointState]]:
    """Exact (probability, reduced 1&4 state) branches after Alice encodes ``bit``.

    ``bit=None`` is an SCG Alice never touched.
    """
    state = source_state(source)
    if bit is None:
        return [(1.0, partial_trace(state, BOB_PHOTONS))]
    out = []
    if bit == 1:
        for br in bsm_branches(state, ALICE_PHOTONS):
            if br.state is not None:
                out.append((br.probability, partial_trace(br.state, BOB_PHOTONS)))
    elif bit == 0:
        a, b = ALICE_PHOTONS
        for br_a in ssm_branches(state, a, SSM_ANGLE):
            if br_a.state is None:
                continue
            for br_b in ssm_branches(br_a.state, b, SSM_ANGLE):
                if br_b.state is not None:
                    out.append((br_a.probability * br_b.probability, partial_trace(br_b.state, BOB_PHOTONS)))
    else:
        raise ValueError(f"bit must be 0, 1 or None, got {bit!r}")
    return out


def bob_ensemble_state(bit: int | None, source: BellKind = BellKind.PSI_MINUS) -> JointState:
    branches = bob_pair_ensemble(bit, source)
    return mixture([s for _, s in branches], [p for p, _ in branches])


def bob_event_distribution(bit: int | None, analyzer: AnalyzerConfig, mode: PhysicsMode,
                           source: BellKind = BellKind.PSI_MINUS) -> dict:
    """Exact law of one analyzer event on Bob's pair after Alice encodes ``bit``.

    Beam splitter: {"different": p, "same": 1 - p}. Birefringent setup:
    keys are (time_separated, outcome1, outcome2); the idealization only
    concerns beam-splitter visibility, so this setup is always physical.
    """
    dist: dict = {}
    for p, pair in bob_pair_ensemble(bit, source):
        if analyzer.setup is Setup.NON_POLARIZING_BS:
            q = bob_different_port_probability(pair, analyzer, mode)
            dist["different"] = dist.get("different", 0.0) + p * q
            dist["same"] = dist.get("same", 0.0) + p * (1 - q)
        else:
            for key, q in pbs_event_distribution(pair, *analyzer.pbs_angles).items():
                dist[key] = dist.get(key, 0.0) + p * q
    return dist


@dataclass(frozen=True)
class NoSignalReport:
    mode: PhysicsMode
    dist_zero: dict
    dist_one: dict
    max_event_difference: float
    max_state_difference: float


def nosignal_report(analyzer: AnalyzerConfig, mode: PhysicsMode,
                    source: BellKind = BellKind.PSI_MINUS) -> NoSignalReport:
    d0 = bob_event_distribution(0, analyzer, mode, source)
    d1 = bob_event_distribution(1, analyzer, mode, source)
    event_diff = max(abs(d0[k] - d1[k]) for k in d0)
    s0, s1 = bob_ensemble_state(0, source), bob_ensemble_state(1, source)
    state_diff = float(np.max(np.abs(s0.matrix - s1.matrix)))
    return NoSignalReport(mode, d0, d1, event_diff, state_diff)


# -- sorted correlation diagrams --------------------------------------------

ANALYSIS_BASES = (("HV", 0.0), ("22.5deg", np.pi / 8), ("DA", np.pi / 4))
_HV = {Outcome.PLUS: "H", Outcome.MINUS: "V"}
# Victor's H/V results on photons 2 and 3
SSM_CONDITIONS = ("HH", "HV", "VH", "VV")


@dataclass(frozen=True)
class CorrelationRow:
    subset: str
    condition: str
    basis: str
    theta: float
    n_trials: int
    e_exact: float
    n_sampled: int
    e_sampled: float


@dataclass
class SortedDiagrams:
    bsm: list
    ssm: list
    union: list

    def rows(self) -> list[CorrelationRow]:
        return self.bsm + self.ssm + self.union

    def lookup(self, subset: str, condition: str, basis: str) -> CorrelationRow:
        for row in self.rows():
            if (row.subset, row.condition, row.basis) == (subset, condition, basis):
                return row
        raise KeyError((subset, condition, basis))


class _Accumulator:
    def __init__(self):
        self.n = 0
        self.exact = np.zeros(len(ANALYSIS_BASES))
        self.sampled_sum = np.zeros(len(ANALYSIS_BASES))
        self.sampled_n = np.zeros(len(ANALYSIS_BASES), dtype=int)

    def add(self, exact, basis_index, sign):
        self.n += 1
        self.exact += exact
        self.sampled_sum[basis_index] += sign
        self.sampled_n[basis_index] += 1

    def rows(self, subset, condition):
        out = []
        for j, (name, theta) in enumerate(ANALYSIS_BASES):
            e_exact = self.exact[j] / self.n if self.n else 0.0
            ns = int(self.sampled_n[j])
            e_sampled = self.sampled_sum[j] / ns if ns else 0.0
            out.append(CorrelationRow(subset, condition, name, float(theta), self.n,
                                      float(e_exact), ns, float(e_sampled)))
        return out


def sorted_diagrams(n_trials: int, streams: Streams, source: BellKind = BellKind.PSI_MINUS) -> SortedDiagrams:
    """Victor-sorted correlations of photons 1&4, as in the delayed-choice swapping experiment.

    Per trial Victor picks BSM or H/V SSM on photons 2&3 at random, and
    photons 1 and 4 are both analyzed in one randomly chosen basis. Trials
    are sorted by Victor's choice and conditioned on his outcome (Bell
    state, or the H/V pair); the "all" rows drop that conditioning. This
    is the one place where Victor's outcomes are used.
    ``e_exact`` averages the Born-rule correlation of each trial's
    conditioned pair, ``e_sampled`` counts the simulated PBS clicks.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    state = source_state(source)
    exact_cache: dict[JointState, np.ndarray] = {}
    acc: dict[tuple[str, str], _Accumulator] = {}

    def bucket(key):
        return acc.setdefault(key, _Accumulator())

    for t in range(n_trials):
        rng = streams.substream(Actor.VICTOR, t)
        if rng.random() < 0.5:
            outcome, post = bsm(state, ALICE_PHOTONS, rng)
            keys = [("bsm", outcome.value), ("bsm", "all")]
        else:
            o2, mid = ssm(state, ALICE_PHOTONS[0], SSM_ANGLE, rng)
            o3, post = ssm(mid, ALICE_PHOTONS[1], SSM_ANGLE, rng)
            keys = [("ssm", _HV[o2] + _HV[o3]), ("ssm", "all")]
        keys.append(("union", "all"))
        pair = partial_trace(post, BOB_PHOTONS)
        exact = exact_cache.get(pair)
        if exact is None:
            exact = np.array([pbs_correlation(pair, th, th) for _, th in ANALYSIS_BASES])
            exact_cache[pair] = exact
        j = int(rng.integers(len(ANALYSIS_BASES)))
        theta = ANALYSIS_BASES[j][1]
        o1, o4 = sample_pbs_outcomes(pair, theta, theta, rng)
        sign = 1 if o1 is o4 else -1
        for key in keys:
            bucket(key).add(exact, j, sign)

    bsm_rows = []
    for kind in BellKind:
        bsm_rows += bucket(("bsm", kind.value)).rows("bsm", kind.value)
    bsm_rows += bucket(("bsm", "all")).rows("bsm", "all")
    ssm_rows = []
    for cond in SSM_CONDITIONS:
        ssm_rows += bucket(("ssm", cond)).rows("ssm", cond)
    ssm_rows += bucket(("ssm", "all")).rows("ssm", "all")
    return SortedDiagrams(bsm_rows, ssm_rows, bucket(("union", "all")).rows("union", "all"))
