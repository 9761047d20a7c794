"""
Command-line experiment harness.

    psba <command> [--config FILE] [--seed N] [--mode paper|physical]
                   [--out PATH] [--set KEY=VALUE ...]

The config file is flat ``key = value`` text (``#`` starts a comment).
Command-line flags override the file. A seed is mandatory. Every command
writes one CSV (UTF-8, LF, header row) and prints a one-line summary.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import multihop, protocol, stats
from .optics import (
    AnalyzerConfig,
    Setup,
    bs_different_port_probability,
)
from .protocol import PhysicsMode, calibrate_rc
from .quantum import BellKind, basis_state, bell_state, maximally_mixed
from .rng import MAX_SEED, Streams


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int
    mode: PhysicsMode = PhysicsMode.PAPER_IDEALIZED
    r_c: int | None = None
    p_target: float = 0.99
    visibility: float = 1.0
    n_trials: int | None = None
    message: str = "FASTER"
    hops: int = 2
    hop_delay_ms: float = 1.0
    hop_distance_lightseconds: float = multihop.SECONDS_PER_LIGHT_MONTH
    out: str | None = None

    def __post_init__(self):
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.r_c is not None and self.r_c < 1:
            raise ConfigError("r_c must be >= 1")
        if not 0.5 < self.p_target < 1:
            raise ConfigError("p_target must lie in (0.5, 1)")
        if not 0 <= self.visibility <= 1:
            raise ConfigError("visibility must lie in [0, 1]")
        if self.n_trials is not None and self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.hops < 1:
            raise ConfigError("hops must be >= 1")
        if not self.hop_delay_ms > 0:
            raise ConfigError("hop_delay_ms must be positive")
        if self.hop_distance_lightseconds < 0:
            raise ConfigError("hop_distance_lightseconds must be non-negative")

    def trials(self, default: int) -> int:
        return default if self.n_trials is None else self.n_trials

    def block_length(self) -> tuple[int, protocol.DecisionRule]:
        r, rule = calibrate_rc(self.p_target)
        return (self.r_c if self.r_c is not None else r), rule


CONFIG_KEYS = {
    "seed": int,
    "mode": PhysicsMode.parse,
    "r_c": int,
    "p_target": float,
    "visibility": float,
    "n_trials": int,
    "message": str,
    "hops": int,
    "hop_delay_ms": float,
    "hop_distance_lightseconds": float,
    "out": str,
}


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(command: str, raw: dict[str, str]) -> RunConfig:
    if "seed" not in raw:
        raise ConfigError("a seed is required (config key 'seed' or --seed)")
    kwargs = {}
    for key, value in raw.items():
        try:
            kwargs[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    known = {f.name for f in fields(RunConfig)}
    return RunConfig(command=command, **{k: v for k, v in kwargs.items() if k in known})


# -- output -----------------------------------------------------------------

def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError("refusing to write a non-finite number")
        return repr(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def render_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


@dataclass
class CommandResult:
    header: list
    rows: list
    summary: str
    ok: bool = True

    def csv(self) -> str:
        return render_csv(self.header, self.rows)


# -- commands ---------------------------------------------------------------

def _bernoulli_count(p: float, n: int, rng: np.random.Generator) -> int:
    return int(np.count_nonzero(rng.random(n) < p))


def cmd_matrix(cfg: RunConfig) -> CommandResult:
    """Different-port vs same-port proportions for the four analyzer cases."""
    n = cfg.trials(10_000)
    streams = Streams(cfg.seed)
    analyzer = AnalyzerConfig(Setup.NON_POLARIZING_BS, cfg.visibility)
    rows = []
    cases = [
        ("B", "swapped Bell states (Alice BSM)", 1, PhysicsMode.PHYSICAL),
        ("SSM-physical", "SSM-collapsed pairs, true state", 0, PhysicsMode.PHYSICAL),
        ("C", "SSM-collapsed pairs, distinguishable override", 0, PhysicsMode.PAPER_IDEALIZED),
    ]
    for tag, (case, description, bit, mode) in enumerate(cases):
        exact = protocol.bob_event_distribution(bit, analyzer, mode)["different"]
        pool = protocol.provision_scg_pool(1, n, tag=tag)
        protocol.encode_bit(bit, pool.next_for_alice(), streams)
        d = protocol.decode_bit(pool.next_for_bob(), analyzer, protocol.DecisionRule(0.375, 0.99), mode,
                                streams)
        rows.append([case, description, mode.value, cfg.visibility, exact, 1 - exact,
                     d.n_diff / n, d.n_same / n, n])
    hh = basis_state("HH", (1, 4))
    exact = bs_different_port_probability(hh, cfg.visibility)
    k = _bernoulli_count(exact, n, streams.substream("matrix", "D"))
    rows.append(["D", "unentangled, indistinguishable, equal polarization", "physical", cfg.visibility,
                 exact, 1 - exact, k / n, (n - k) / n, n])
    header = ["case", "description", "mode", "visibility", "exact_diff", "exact_same",
              "sampled_diff", "sampled_same", "n_samples"]
    summary = "matrix: " + ", ".join(f"{r[0]}={r[6]:.3f}:{r[7]:.3f}" for r in rows)
    return CommandResult(header, rows, summary)


HOM_STATES = {
    "HH": lambda: basis_state("HH", (1, 4)),
    "HV": lambda: basis_state("HV", (1, 4)),
    "psi_minus": lambda: bell_state(BellKind.PSI_MINUS, (1, 4)),
    "bell_mixture": lambda: maximally_mixed((1, 4)),
}


def cmd_hom_sweep(cfg: RunConfig) -> CommandResult:
    n = cfg.trials(10_000)
    streams = Streams(cfg.seed)
    rows = []
    for name, make in HOM_STATES.items():
        rho = make()
        for i, v in enumerate(np.linspace(0.0, 1.0, 11)):
            v = float(v)
            exact = bs_different_port_probability(rho, v)
            k = _bernoulli_count(exact, n, streams.substream("hom", name, i))
            rows.append([name, v, exact, k / n, n])
    header = ["state", "visibility", "exact_diff", "sampled_diff", "n_samples"]
    dip = next(r for r in rows if r[0] == "HH" and r[1] == 1.0)
    return CommandResult(header, rows, f"hom-sweep: HH at v=1 gives P(diff)={dip[2]:.3g}")


def cmd_send(cfg: RunConfig) -> CommandResult:
    r_c, rule = cfg.block_length()
    streams = Streams(cfg.seed)
    analyzer = AnalyzerConfig(Setup.NON_POLARIZING_BS, cfg.visibility)
    payload = cfg.message.encode("utf-8")
    # Bob cannot know the length in advance: cover the largest possible frame
    pool = protocol.provision_scg_pool(protocol.LENGTH_FIELD_BITS * 256, r_c)
    transcript = protocol.send_message(payload, pool, cfg.mode, streams)
    decoded, report = protocol.receive_message(pool, analyzer, rule, cfg.mode, streams)
    sent = transcript.bits
    got = report.bits
    rows = []
    for i in range(max(len(sent), len(got))):
        d = report.decodes[i] if i < len(got) else None
        lo, hi = d.ci_95() if d else (0.0, 0.0)
        rows.append([
            i,
            d.scg_index if d else transcript.entries[i].scg_index,
            sent[i] if i < len(sent) else -1,
            d.bit if d else -1,
            d.n_diff if d else 0,
            d.n_same if d else 0,
            d.fraction if d else 0.0,
            lo,
            hi,
        ])
    overlap = min(len(sent), len(got))
    rep = stats.channel_report(sent[:overlap], got[:overlap])
    header = ["position", "scg_index", "sent_bit", "decoded_bit", "n_diff", "n_same", "fraction",
              "ci95_low", "ci95_high"]
    summary = (f"send[{cfg.mode.value}]: r_c={r_c} sent={payload!r} ({len(sent)} SCGs) "
               f"decoded={decoded!r} ({len(got)} SCGs) exact={decoded == payload} "
               f"ber={rep.ber:.4f} mi={rep.mutual_information:.4f}")
    return CommandResult(header, rows, summary)


def cmd_nosignal(cfg: RunConfig) -> CommandResult:
    analyzers = [
        AnalyzerConfig(Setup.NON_POLARIZING_BS, cfg.visibility),
        AnalyzerConfig(Setup.BIREFRINGENT_PBS, cfg.visibility, (0.0, 0.0)),
        AnalyzerConfig(Setup.BIREFRINGENT_PBS, cfg.visibility, (math.pi / 4, math.pi / 4)),
    ]
    rows = []
    worst = 0.0
    state_diff = 0.0
    for analyzer in analyzers:
        rep = protocol.nosignal_report(analyzer, cfg.mode)
        worst = max(worst, rep.max_event_difference)
        state_diff = rep.max_state_difference
        setting = f"{analyzer.setup.value}@{analyzer.pbs_angles[0]:.4f}" \
            if analyzer.setup is Setup.BIREFRINGENT_PBS else analyzer.setup.value
        for key in rep.dist_zero:
            event = key if isinstance(key, str) else "/".join(
                ["separated" if key[0] else "coincident", key[1].value, key[2].value])
            p0, p1 = rep.dist_zero[key], rep.dist_one[key]
            rows.append([setting, event, p0, p1, abs(p0 - p1)])
    rows.append(["state", "max_entry_bob_pair", 0.0, 0.0, state_diff])

    n_bits = cfg.trials(2_000)
    r_c, rule = cfg.block_length()
    streams = Streams(cfg.seed)
    bits = protocol.random_bits(n_bits, streams, "nosignal")
    run = protocol.simulate_channel(bits, r_c, rule, cfg.mode, streams, analyzers[0])
    mi = stats.mutual_information_estimate(run.sent, run.decoded)
    rows.append(["monte_carlo", "mutual_information_bits", float(n_bits), float(r_c), mi])
    header = ["analyzer", "event", "p_bit0", "p_bit1", "abs_diff"]
    ok = worst < 1e-12 if cfg.mode is PhysicsMode.PHYSICAL else True
    summary = (f"nosignal[{cfg.mode.value}]: max event difference={worst:.3g} "
               f"state difference={state_diff:.3g} mi={mi:.5f} over {n_bits} bits"
               + ("" if ok else " FAILED: physical distributions differ"))
    return CommandResult(header, rows, summary, ok)


def cmd_sorted(cfg: RunConfig) -> CommandResult:
    n = cfg.trials(10_000)
    diagrams = protocol.sorted_diagrams(n, Streams(cfg.seed))
    header = ["subset", "condition", "basis", "theta", "n_trials", "e_exact", "n_sampled", "e_sampled"]
    rows = [[r.subset, r.condition, r.basis, r.theta, r.n_trials, r.e_exact, r.n_sampled, r.e_sampled]
            for r in diagrams.rows()]
    ssm = diagrams.lookup("ssm", "all", "DA")
    union = diagrams.lookup("union", "all", "DA")
    summary = f"sorted: {n} trials, SSM E(DA)={ssm.e_exact:.4f}, union E(DA)={union.e_exact:.4f}"
    return CommandResult(header, rows, summary)


def cmd_calibrate(cfg: RunConfig) -> CommandResult:
    r_c, rule = calibrate_rc(cfg.p_target)
    if cfg.r_c is not None:
        r_c = cfg.r_c
    gap = (rule.rate_zero - rule.rate_one) / 2
    err1 = stats.binomial_error_bound(r_c, rule.threshold, rule.rate_one)
    err0 = stats.binomial_error_bound(r_c, rule.threshold, rule.rate_zero)
    n_bits = cfg.trials(1_000)
    streams = Streams(cfg.seed)
    bits = protocol.random_bits(n_bits, streams, "calibrate")
    run = protocol.simulate_channel(bits, r_c, rule, cfg.mode, streams)
    rep = stats.channel_report(run.sent, run.decoded)
    errors = round(rep.ber * n_bits)
    lo, hi = stats.wilson_interval(errors, n_bits)
    metrics = [
        ("p_target", cfg.p_target),
        ("r_c", r_c),
        ("threshold", rule.threshold),
        ("hoeffding_bound", stats.hoeffding_bound(r_c, gap)),
        ("exact_error_bit1", err1),
        ("exact_error_bit0", err0),
        ("n_bits", n_bits),
        ("empirical_ber", rep.ber),
        ("empirical_ber_ci95_low", lo),
        ("empirical_ber_ci95_high", hi),
        ("mutual_information_bits", rep.mutual_information),
    ]
    summary = (f"calibrate[{cfg.mode.value}]: p={cfg.p_target} -> r_c={r_c}, t={rule.threshold}, "
               f"exact errors {err1:.3g}/{err0:.3g}, empirical BER {rep.ber:.4f} over {n_bits} bits")
    return CommandResult(["metric", "value"], [list(m) for m in metrics], summary)


def cmd_multihop(cfg: RunConfig) -> CommandResult:
    r_c, rule = cfg.block_length()
    n = cfg.trials(1_000)
    chain_cfg = multihop.ChainConfig.with_hops(
        cfg.hops, hop_delay_s=cfg.hop_delay_ms / 1000, hop_distance_ls=cfg.hop_distance_lightseconds,
        mode=cfg.mode,
    )
    chain = multihop.build_chain(chain_cfg, n, r_c, rule,
                                 AnalyzerConfig(Setup.NON_POLARIZING_BS, cfg.visibility))
    streams = Streams(cfg.seed)
    sent = protocol.random_bits(n, streams, "multihop")
    per_node = [[] for _ in chain_cfg.nodes]
    for bit in sent:
        result = multihop.relay_bit(bit, chain, streams)
        for i, b in enumerate(result.bits):
            per_node[i].append(b)
    metrics = [("hops", cfg.hops), ("r_c", r_c), ("n_trials", n)]
    final_error = 0.0
    for i, node in enumerate(chain_cfg.nodes[1:], start=1):
        final_error = sum(a != b for a, b in zip(sent, per_node[i])) / n
        metrics.append((f"error_rate_{node}", final_error))
        metrics.append((f"mi_bits_{node}", stats.mutual_information_estimate(sent, per_node[i])))
    p11, p10 = multihop.end_to_end_transition(chain)
    metrics.append(("exact_end_to_end_error_bit1", 1 - p11))
    metrics.append(("exact_end_to_end_error_bit0", p10))
    lat = multihop.latency_report(chain)
    metrics += [
        ("psba_latency_s", lat.psba_latency_s),
        ("light_time_s", lat.light_time_s),
        ("speedup", lat.speedup),
        ("capacity_bits", lat.capacity_bits),
    ]
    summary = (f"multihop[{cfg.mode.value}]: {cfg.hops} hops, end-to-end error "
               f"{final_error:.4f}, speedup {lat.speedup:.3g}, capacity {lat.capacity_bits:.3f} bits")
    return CommandResult(["metric", "value"], [list(m) for m in metrics], summary)


COMMANDS: dict[str, Callable[[RunConfig], CommandResult]] = {
    "matrix": cmd_matrix,
    "hom-sweep": cmd_hom_sweep,
    "send": cmd_send,
    "nosignal": cmd_nosignal,
    "sorted": cmd_sorted,
    "calibrate": cmd_calibrate,
    "multihop": cmd_multihop,
}


def run_command(cfg: RunConfig) -> CommandResult:
    return COMMANDS[cfg.command](cfg)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psba", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="flat key = value file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mode", help="paper or physical")
    parser.add_argument("--out", help="CSV output path (default: <command>.csv)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        raw = parse_config_text(args.config.read_text(encoding="utf-8")) if args.config else {}
        overrides = parse_config_text("\n".join(args.set))
        raw.update(overrides)
        for key in ("seed", "mode", "out"):
            value = getattr(args, key)
            if value is not None:
                raw[key] = str(value)
        cfg = build_config(args.command, raw)
        result = run_command(cfg)
    except (ConfigError, OSError) as exc:
        print(f"psba: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, protocol.ProtocolError) as exc:
        print(f"psba: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg.out or f"{cfg.command}.csv")
    try:
        out.write_bytes(result.csv().encode("utf-8"))
    except OSError as exc:
        print(f"psba: error: cannot write {out}: {exc}", file=sys.stderr)
        return 2
    print(result.summary)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
