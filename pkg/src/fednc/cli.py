"""Command-line experiment runner.

Subcommands::

    fednc run      train FedAvg and/or FedNC, write metrics.csv + summary.json
    fednc verify   Monte Carlo checks of the collection and decoding oracles
    fednc analyze  closed-form tables (coupon collector, decoding error, bounds)
    fednc attack   eavesdropper audit sweep over the number of tapped packets
    fednc coupon   blind-box draw counts, uncoded vs coded

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 I/O error.
"""
import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, codec, netsim
from .config import ExperimentConfig
from .errors import ConfigError
from .federation import FederationState, partition_data, run_federation
from .galois import FieldSpec
from .model import init_model, load_idx_dataset, make_synthetic
from .seeding import seed_stream

CSV_COLUMNS = ["round", "scheme", "decode_success", "packets_drawn", "rank_at_stop",
               "test_accuracy", "train_loss", "participants", "elapsed_ms"]

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def load_data(cfg: ExperimentConfig):
    if cfg["data.source"] == "idx":
        train = load_idx_dataset(cfg["data.idx_train_images"], cfg["data.idx_train_labels"])
        test = load_idx_dataset(cfg["data.idx_test_images"], cfg["data.idx_test_labels"])
        return train, test
    return make_synthetic(cfg["data.n_train"], cfg["data.n_test"], seed_stream(cfg["experiment.seed"], "data"),
                          n_classes=cfg["data.n_classes"], dim=cfg["data.n_features"],
                          class_sep=cfg["data.class_sep"], noise=cfg["data.noise"])


def build_state(cfg: ExperimentConfig, data=None) -> FederationState:
    seed = cfg["experiment.seed"]
    train, test = data or load_data(cfg)
    fcfg = cfg.federation()
    clients = partition_data(train, fcfg, seed_stream(seed, "partition"))
    arch = cfg.architecture(train.features.shape[1], train.n_classes)
    w0 = init_model(arch, seed_stream(seed, "init"))
    return FederationState(w0, clients, test)


def schemes_of(cfg):
    s = cfg["experiment.scheme"]
    return ["fedavg", "fednc"] if s == "both" else [s]


def run_schemes(cfg: ExperimentConfig):
    """Run every configured scheme from the same initial state; returns {scheme: [RoundMetrics]}."""
    data = load_data(cfg)
    out = {}
    for scheme in schemes_of(cfg):
        state = build_state(cfg, data)
        out[scheme] = run_federation(state, cfg.federation(scheme), cfg.training(), cfg.channel(),
                                     cfg["experiment.seed"], scheme)
    return out


def metrics_csv(results, record_time=False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for scheme, rows in results.items():
        for m in rows:
            w.writerow([m.round, scheme, int(m.decode_success), m.packets_drawn, m.rank_at_stop,
                        repr(float(m.test_accuracy)), repr(float(m.train_loss)),
                        ";".join(str(i) for i in m.participants),
                        f"{m.wallclock * 1000:.3f}" if record_time else ""])
    return buf.getvalue()


def summarize(results) -> dict:
    out = {}
    for scheme, rows in results.items():
        out[scheme] = {
            "rounds": len(rows),
            "final_accuracy": rows[-1].test_accuracy if rows else None,
            "decode_failures": sum(not m.decode_success for m in rows),
            "mean_packets_drawn": float(np.mean([m.packets_drawn for m in rows])) if rows else None,
            "mean_rank_at_stop": float(np.mean([m.rank_at_stop for m in rows])) if rows else None,
        }
    return out


def run_experiment(cfg: ExperimentConfig) -> Path:
    out = Path(cfg["experiment.output_dir"])
    results = run_schemes(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(results, cfg["experiment.record_time"]))
    (out / "summary.json").write_text(json.dumps(summarize(results), indent=2, sort_keys=True) + "\n")
    (out / "config.ini").write_text(cfg.dumps())
    return out


@dataclass
class Check:
    name: str
    observed: float
    oracle: float
    tolerance: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: observed={self.observed:.6g} oracle={self.oracle:.6g} tol={self.tolerance}"


def _rel_check(name, observed, oracle, rel):
    return Check(name, observed, oracle, f"{rel:.0%} rel", abs(observed - oracle) <= rel * abs(oracle))


def _binom_check(name, hits, n, p):
    sigma = math.sqrt(p * (1 - p) / n)
    obs = hits / n
    return Check(name, obs, p, f"3sigma={3 * sigma:.3g}", abs(obs - p) <= 3 * sigma)


def verify_propositions(cfg: ExperimentConfig) -> list:
    """Monte Carlo suites against the closed-form oracles."""
    seed = cfg["experiment.seed"]
    trials = cfg["experiment.trials"]
    k = cfg["verify.k"]
    checks = []

    uncoded = {}
    for kk in sorted(set(cfg["verify.coupon_ks"]) | {k}):
        uncoded[kk] = netsim.uncoded_draws_batch(kk, trials, seed_stream(seed, "verify", "uncoded", kk)).mean()
        checks.append(_rel_check(f"uncoded blind-box mean K={kk}", uncoded[kk],
                                 analysis.coupon_expectation_exact(kk), 0.02))

    worst = max(abs(analysis.coupon_expectation_exact(kk) - analysis.coupon_expectation_asymptotic(kk)) * 6 * kk
                for kk in range(2, 10_001))
    checks.append(Check("asymptotic residual * 6K, K=2..10^4", worst, 1.0, "<= 1", worst <= 1.0))

    for s in cfg["verify.fields"]:
        spec = FieldSpec(s)
        coded = netsim.coded_draws_batch(k, spec, trials, seed_stream(seed, "verify", "coded", s)).mean()
        checks.append(_rel_check(f"coded blind-box mean K={k} s={s}", coded,
                                 analysis.coded_collection_expectation(k, s), 0.02))
        checks.append(Check(f"coded < uncoded mean K={k} s={s}", coded, uncoded[k], "strict <",
                            coded < uncoded[k]))
        mats = spec.random_symbols(seed_stream(seed, "verify", "singular", s), (trials, k, k))
        singular = int((codec.rank_batch(mats, spec) < k).sum())
        checks.append(_binom_check(f"singular-matrix frequency K={k} s={s}", singular, trials,
                                   analysis.decode_error_probability(k, s)))

    worst_gap = min(analysis.prop2_error_bound(analysis.BoundInputs(s, kk)) - analysis.decode_error_probability(kk, s)
                    for s in (1, 2, 4, 8) for kk in range(1, 65))
    checks.append(Check("error bound dominance, K<=64, s in {1,2,4,8}", worst_gap, 0.0, ">= 0", worst_gap >= 0))
    return checks


def _table(rows, columns) -> str:
    widths = [max(len(c), *(len(_cell(r[c])) for r in rows)) for c in columns]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    for r in rows:
        lines.append("  ".join(_cell(r[c]).rjust(w) for c, w in zip(columns, widths)))
    return "\n".join(lines)


def _cell(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _write_csv(path: Path, rows, columns):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in columns})


def analyze_rows(cfg: ExperimentConfig):
    coupon = [{"K": kk,
               "exact": analysis.coupon_expectation_exact(kk),
               "asymptotic": analysis.coupon_expectation_asymptotic(kk),
               "coded_s1": analysis.coded_collection_expectation(kk, 1),
               "coded_s8": analysis.coded_collection_expectation(kk, 8)}
              for kk in sorted(set(cfg["verify.coupon_ks"]) | {cfg["verify.k"]})]
    bounds = analysis.bound_table(k=cfg["verify.k"])
    return coupon, bounds


def attack_rows(cfg: ExperimentConfig, s: int = None):
    k = cfg["verify.k"]
    spec = FieldSpec(s or cfg["field.s"])
    trials = cfg["experiment.trials"]
    rows = []
    for m in range(0, k + 1):
        rng = seed_stream(cfg["experiment.seed"], "attack", spec.s, m)
        hits = full = 0
        rank_sum = 0
        for _ in range(trials):
            rep = netsim.eavesdrop_audit(list(spec.random_symbols(rng, (m, k))), k, spec)
            hits += bool(rep.recoverable_indices)
            full += rep.full_decode
            rank_sum += rep.rank
        rows.append({"m": m, "K": k, "s": spec.s, "trials": trials,
                     "any_recoverable": hits / trials,
                     "exact_any_recoverable": float(analysis.unit_recovery_probability(m, k, spec.s)),
                     "full_decode": full / trials, "mean_rank": rank_sum / trials})
    return rows


def coupon_rows(cfg: ExperimentConfig):
    trials = cfg["experiment.trials"]
    seed = cfg["experiment.seed"]
    rows = []
    for kk in cfg["verify.coupon_ks"]:
        row = {"K": kk, "uncoded_mean": netsim.uncoded_draws_batch(kk, trials, seed_stream(seed, "coupon", kk)).mean(),
               "uncoded_exact": analysis.coupon_expectation_exact(kk)}
        for s in cfg["verify.fields"]:
            row[f"coded_s{s}_mean"] = netsim.coded_draws_batch(
                kk, FieldSpec(s), trials, seed_stream(seed, "coupon", kk, s)).mean()
            row[f"coded_s{s}_exact"] = analysis.coded_collection_expectation(kk, s)
        rows.append(row)
    return rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fednc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("run", "run FedAvg / FedNC training"),
                        ("verify", "check Monte Carlo results against exact oracles"),
                        ("analyze", "print closed-form tables"),
                        ("attack", "eavesdropper audit sweep"),
                        ("coupon", "blind-box collection comparison")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=str)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--scheme", choices=["fedavg", "fednc", "both"])
        if name == "attack":
            sp.add_argument("--s", type=int, dest="field_s")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"experiment.seed": args.seed, "experiment.output_dir": args.out,
                 "experiment.trials": args.trials, "experiment.scheme": args.scheme}
    if getattr(args, "field_s", None) is not None:
        overrides["field.s"] = args.field_s
    try:
        cfg = ExperimentConfig.load(args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "run":
            out = run_experiment(cfg)
            print(f"wrote {out / 'metrics.csv'} and {out / 'summary.json'}")
            return EXIT_OK
        if args.command == "verify":
            checks = verify_propositions(cfg)
            for c in checks:
                print(c.line())
            return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY
        if args.command == "analyze":
            coupon, bounds = analyze_rows(cfg)
            ccols = ["K", "exact", "asymptotic", "coded_s1", "coded_s8"]
            bcols = ["s", "eta", "error_bound", "success_term", "K", "exact_error_K"]
            print(_table(coupon, ccols))
            print()
            print(_table(bounds, bcols))
            if args.out:
                _write_csv(Path(args.out) / "coupon_closed_form.csv", coupon, ccols)
                _write_csv(Path(args.out) / "error_bounds.csv", bounds, bcols)
            return EXIT_OK
        if args.command == "attack":
            rows = attack_rows(cfg)
            cols = list(rows[0])
            print(_table(rows, cols))
            if args.out:
                _write_csv(Path(args.out) / "attack.csv", rows, cols)
            return EXIT_OK
        if args.command == "coupon":
            rows = coupon_rows(cfg)
            cols = list(rows[0])
            print(_table(rows, cols))
            if args.out:
                _write_csv(Path(args.out) / "coupon.csv", rows, cols)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
