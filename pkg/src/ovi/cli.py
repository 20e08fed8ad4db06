"""Command-line pipeline: ingest, synth, ovi, backtest, regress, flow, network, report.

Every subcommand reads an optional JSON config (flags override file
values, file values override defaults), writes its documented CSV/JSON
artifacts into the output directory, and finishes with a manifest
recording the config hash, the seed and a checksum per output file.
With a fixed seed the whole pipeline is byte-reproducible.

Environment: OVI_OUTPUT_DIR overrides the default output directory,
OVI_THREADS the worker cap. Exit codes: 0 success, 1 data/validation
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, OviError
from .evaluation import (
    BetKind, BetScheme, ReturnBasis, ReturnMode, ReturnSpan, compute_returns,
    performance_summary, pnl_series, sr_significance_test,
)
from .flows import median_flow_share, write_flow_csv
from .market import (
    IntradayCsvSchema, MarketDataset, Mpc, SynthConfig, generate_synthetic_market,
    merge_datasets, parse_daily_summary, parse_equity_bars, parse_intraday,
    write_daily_csv, write_equity_csv, write_intraday_csv,
)
from .network import (
    SignificanceLevel, build_impact_network, network_summary, write_edge_list,
    write_network_summary,
)
from .regression import (
    FeatureTensor, HyperParams, WindowSpec, sliding_window_backtest,
    write_coefficient_paths, write_window_metrics,
)
from .signals import (
    Feature, FilterSpec, FlowKind, IntentRestriction, SideRestriction,
    compute_ovi, write_ovi_csv,
)

REPORT_COLUMNS = ["signal", "mpc", "group", "scheme", "mode",
                  "sr", "ppd", "p_value", "profitable_ratio", "n_avg"]

CONFIG_DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "benchmark": "SPY",
    "rate": 0.0,
    "output_dir": "out",
    "synth": None,            # SynthConfig field overrides
    "inputs": None,           # {"intraday": [...], "daily": ..., "equity": ...}
    "filter": {},             # FilterSpec field overrides
    "mpcs": ["MM", "CUST", "BROKER", "FIRM", "PROCUST"],
    "groups": [3],
    "schemes": [{"kind": "uniform"}],
    "modes": [{"span": "CL_tmOP", "basis": "EMR"}],
    "window": {},             # WindowSpec overrides
    "hyper": {},              # HyperParams overrides
    "lambda_grid": None,
    "network": {"q": 3, "level": "full_bonferroni", "mpc": "MM"},
}


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = json.loads(json.dumps(CONFIG_DEFAULTS))
    if path:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        unknown = set(user) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg.update(user)
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    env_out = os.environ.get("OVI_OUTPUT_DIR")
    if env_out and overrides.get("output_dir") is None:
        cfg["output_dir"] = env_out
    env_threads = os.environ.get("OVI_THREADS")
    if env_threads and overrides.get("threads") is None:
        cfg["threads"] = int(env_threads)
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of the semantic config: output location and worker cap excluded."""
    semantic = {k: v for k, v in cfg.items() if k not in ("output_dir", "threads")}
    return hashlib.sha256(
        json.dumps(semantic, sort_keys=True).encode("utf-8")).hexdigest()


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: dict, outputs: list) -> Path:
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "outputs": {name: _file_sha256(out_dir / name) for name in sorted(outputs)},
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# -- config object construction -------------------------------------------


def synth_config_from(cfg: dict) -> SynthConfig:
    spec = dict(cfg.get("synth") or {})
    spec.setdefault("seed", cfg["seed"])
    spec.setdefault("benchmark", cfg["benchmark"])
    rho = {Mpc.from_label(k): float(v) for k, v in spec.pop("rho", {}).items()}
    known = {f for f in SynthConfig.__dataclass_fields__}
    unknown = set(spec) - known
    if unknown:
        raise ConfigError(f"unknown synth keys {sorted(unknown)}")
    return SynthConfig(rho=rho, **spec)


def filter_from(cfg: dict) -> FilterSpec:
    spec = dict(cfg.get("filter") or {})
    kwargs = {"rate": float(cfg.get("rate", 0.0))}
    if "flow_kind" in spec:
        kwargs["flow_kind"] = FlowKind(spec.pop("flow_kind"))
    if "side" in spec:
        kwargs["side_restriction"] = SideRestriction(spec.pop("side"))
    if "intent" in spec:
        kwargs["intent_restriction"] = IntentRestriction(spec.pop("intent"))
    if "feature_bucket" in spec:
        fb = spec.pop("feature_bucket")
        kwargs["feature_bucket"] = (Feature(fb["feature"]), int(fb["bucket"]))
    if "exchanges" in spec:
        kwargs["dataset_restriction"] = frozenset(spec.pop("exchanges"))
    if "time_cutoff" in spec:
        kwargs["time_cutoff"] = int(spec.pop("time_cutoff"))
    if "per_asset_buckets" in spec:
        kwargs["per_asset_buckets"] = bool(spec.pop("per_asset_buckets"))
    if spec:
        raise ConfigError(f"unknown filter keys {sorted(spec)}")
    return FilterSpec(**kwargs)


def scheme_from(entry: dict, rate: float) -> BetScheme:
    kind = BetKind(entry.get("kind", "uniform"))
    mpc = Mpc.from_label(entry["mpc"]) if entry.get("mpc") else None
    return BetScheme(kind=kind, mpc=mpc,
                     iv_cap=float(entry.get("iv_cap", 2.0)), rate=rate)


def mode_from(entry: dict) -> ReturnMode:
    return ReturnMode(span=ReturnSpan(entry.get("span", "CL_tmOP")),
                      basis=ReturnBasis(entry.get("basis", "EMR")))


def load_dataset(cfg: dict) -> MarketDataset:
    inputs = cfg.get("inputs")
    if inputs:
        parsed = []
        quality: dict = {}
        entries = inputs["intraday"]
        if isinstance(entries, (str, dict)):
            entries = [entries]
        for entry in entries:
            if isinstance(entry, str):
                path, exchange = entry, "X1"
            else:
                path, exchange = entry["path"], entry.get("exchange", "X1")
            frame = parse_intraday(path, IntradayCsvSchema(exchange=exchange))
            for k, v in frame.attrs.get("quality", {}).items():
                quality[k] = quality.get(k, 0) + v
            parsed.append(frame)
        buckets = pd.concat(parsed, ignore_index=True)
        summaries = parse_daily_summary(inputs["daily"])
        equities = parse_equity_bars(inputs["equity"])
        return MarketDataset(buckets, summaries, equities,
                             benchmark=cfg["benchmark"], quality=quality)
    if cfg.get("synth") is not None:
        return generate_synthetic_market(synth_config_from(cfg))
    raise ConfigError("config needs either 'inputs' or 'synth'")


# -- report emission --------------------------------------------------------


def emit_report(results: list, out_dir: Path, fmt: str = "csv") -> list:
    """Write the strategy summary grid; returns the created file names."""
    df = pd.DataFrame(list(results), columns=REPORT_COLUMNS)
    created = []
    if fmt in ("csv", "both"):
        df.to_csv(out_dir / "report.csv", index=False, float_format="%.12g")
        created.append("report.csv")
    if fmt in ("json", "both"):
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(list(results), fh, indent=2, sort_keys=True)
            fh.write("\n")
        created.append("report.json")
    return created


def write_cum_pnl_csv(pnl, path) -> None:
    df = pd.DataFrame({
        "date": pd.to_datetime(pnl.days).strftime("%Y-%m-%d"),
        "cum_pnl": np.cumsum(pnl.daily),
    })
    df.to_csv(path, index=False, float_format="%.12g")


def _strategy_rows(data: MarketDataset, cfg: dict):
    """One summary row plus the P&L series per configured combination."""
    panel = compute_ovi(data, filter_from(cfg))
    rows, series = [], []
    for mode_spec in cfg["modes"]:
        mode = mode_from(mode_spec)
        rets = compute_returns(data, mode)
        for label in cfg["mpcs"]:
            sig = panel.for_mpc(Mpc.from_label(label))
            for scheme_spec in cfg["schemes"]:
                scheme = scheme_from(scheme_spec, cfg["rate"])
                for group in cfg["groups"]:
                    p = pnl_series(sig, rets, scheme, group=group, data=data)
                    try:
                        perf = performance_summary(p)
                        test = sr_significance_test(p)
                        row = {
                            "signal": sig.name,
                            "mpc": label,
                            "group": f"Q{group}",
                            "scheme": scheme.label,
                            "mode": mode.label,
                            "sr": perf["sharpe_annualized"],
                            "ppd": perf["ppd"],
                            "p_value": test["p_value"],
                            "profitable_ratio": perf["profitable_ratio"],
                            "n_avg": float(p.n_positions.mean()),
                        }
                    except OviError as exc:
                        row = {"signal": sig.name, "mpc": label,
                               "group": f"Q{group}", "scheme": scheme.label,
                               "mode": mode.label, "sr": float("nan"),
                               "ppd": float("nan"), "p_value": float("nan"),
                               "profitable_ratio": float("nan"),
                               "n_avg": float(p.n_positions.mean())}
                        row["error"] = str(exc)
                    rows.append(row)
                    series.append(p)
    return rows, series


# -- subcommands ------------------------------------------------------------


def cmd_synth(cfg: dict, out_dir: Path) -> list:
    data = generate_synthetic_market(synth_config_from(cfg))
    write_intraday_csv(data.buckets, out_dir / "intraday.csv")
    write_daily_csv(data.summaries, out_dir / "daily.csv")
    write_equity_csv(data.equities, out_dir / "equity.csv")
    return ["intraday.csv", "daily.csv", "equity.csv"]


def cmd_ingest(cfg: dict, out_dir: Path) -> list:
    data = load_dataset(cfg)
    report = {
        "n_assets": int(data.n_assets),
        "n_days": int(data.n_days),
        "n_bucket_rows": int(len(data.buckets)),
        "n_summary_rows": int(len(data.summaries)),
        "n_equity_rows": int(len(data.equities)),
        "benchmark": data.benchmark,
        "quality": data.quality,
    }
    with open(out_dir / "data_quality.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ["data_quality.json"]


def cmd_ovi(cfg: dict, out_dir: Path) -> list:
    data = load_dataset(cfg)
    panel = compute_ovi(data, filter_from(cfg))
    write_ovi_csv(panel, out_dir / "ovi.csv")
    return ["ovi.csv"]


def cmd_backtest(cfg: dict, out_dir: Path) -> list:
    data = load_dataset(cfg)
    rows, series = _strategy_rows(data, cfg)
    created = emit_report(rows, out_dir, fmt="csv")
    with open(out_dir / "results.json", "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    created.append("results.json")
    for row, p in zip(rows, series):
        name = "cum_pnl_{mpc}_{group}_{scheme}_{mode}.csv".format(
            mpc=row["mpc"], group=row["group"],
            scheme=row["scheme"].replace("[", "_").replace("]", ""),
            mode=row["mode"])
        write_cum_pnl_csv(p, out_dir / name)
        created.append(name)
    return created


def cmd_regress(cfg: dict, out_dir: Path) -> list:
    data = load_dataset(cfg)
    panel = compute_ovi(data, filter_from(cfg))
    tensor = FeatureTensor.from_panels(
        [panel.for_mpc(Mpc.from_label(m)) for m in cfg["mpcs"]])
    mode = mode_from(cfg["modes"][0])
    rets = compute_returns(data, mode)
    f = np.where(rets.mask, rets.values, 0.0)
    window = WindowSpec(**cfg.get("window", {}))
    hyper = HyperParams(**{"seed": cfg["seed"], **cfg.get("hyper", {})})
    results = sliding_window_backtest(
        FeatureTensor(values=tensor.values[:, :f.shape[1]],
                      feature_names=tensor.feature_names,
                      assets=tensor.assets, days=rets.days),
        f, window, hyper, lambda_grid=cfg.get("lambda_grid"))
    write_coefficient_paths(results, tensor.feature_names,
                            out_dir / "coefficient_paths.csv")
    write_window_metrics(results, out_dir / "window_metrics.csv")
    return ["coefficient_paths.csv", "window_metrics.csv"]


def cmd_flow(cfg: dict, out_dir: Path) -> list:
    data = load_dataset(cfg)
    shares = median_flow_share(data)
    write_flow_csv(shares, out_dir / "flow_shares.csv")
    return ["flow_shares.csv"]


def cmd_network(cfg: dict, out_dir: Path) -> list:
    data = load_dataset(cfg)
    net_cfg = cfg.get("network") or {}
    panel = compute_ovi(data, filter_from(cfg))
    sig = panel.for_mpc(Mpc.from_label(net_cfg.get("mpc", "MM")))
    rets = compute_returns(data, mode_from(cfg["modes"][0]))
    net = build_impact_network(
        sig, rets, q=int(net_cfg.get("q", 3)),
        level=SignificanceLevel(net_cfg.get("level", "full_bonferroni")),
        threads=int(cfg["threads"]))
    write_edge_list(net, out_dir / "edges.csv")
    summary = network_summary(net, seed=cfg["seed"])
    write_network_summary(summary, out_dir / "network_summary.json")
    return ["edges.csv", "network_summary.json"]


def cmd_report(cfg: dict, out_dir: Path, results_path: str, fmt: str) -> list:
    with open(results_path, encoding="utf-8") as fh:
        rows = json.load(fh)
    return emit_report(rows, out_dir, fmt=fmt)


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovi",
        description="Option volume imbalance signals and evaluation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)

    p_synth = sub.add_parser("synth", parents=[common],
                             help="generate a synthetic market")
    p_synth.add_argument("--assets", type=int, default=None)
    p_synth.add_argument("--days", type=int, default=None)

    sub.add_parser("ingest", parents=[common], help="parse and validate inputs")

    p_ovi = sub.add_parser("ovi", parents=[common], help="export an OVI panel")
    p_ovi.add_argument("--filter", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="filter overrides, e.g. flow_kind=trd, iv_bucket=4")

    sub.add_parser("backtest", parents=[common], help="strategy grid evaluation")
    sub.add_parser("regress", parents=[common], help="sliding-window fit")
    sub.add_parser("flow", parents=[common], help="participant flow shares")
    sub.add_parser("network", parents=[common], help="cross-impact network")

    p_rep = sub.add_parser("report", parents=[common], help="re-emit a report")
    p_rep.add_argument("--results", required=True, help="results.json path")
    p_rep.add_argument("--format", choices=["csv", "json", "both"], default="csv")
    return parser


def _filter_tokens_to_config(tokens: list, cfg: dict) -> None:
    spec = dict(cfg.get("filter") or {})
    for token in tokens:
        if "=" not in token:
            raise ConfigError(f"bad --filter token {token!r}, want KEY=VALUE")
        key, val = token.split("=", 1)
        if key.endswith("_bucket"):
            spec["feature_bucket"] = {"feature": key[:-len("_bucket")],
                                      "bucket": int(val)}
        elif key == "exchanges":
            spec["exchanges"] = val.split(",")
        elif key == "time_cutoff":
            spec["time_cutoff"] = int(val)
        else:
            spec[key] = val
    cfg["filter"] = spec


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {"output_dir": args.output_dir, "seed": args.seed,
                 "threads": args.threads}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "synth":
            synth = dict(cfg.get("synth") or {})
            if args.assets is not None:
                synth["n_assets"] = args.assets
            if args.days is not None:
                synth["n_days"] = args.days
            cfg["synth"] = synth
        if args.command == "ovi" and args.filter:
            _filter_tokens_to_config(args.filter, cfg)

        out_dir = Path(cfg["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            outputs = cmd_synth(cfg, out_dir)
        elif args.command == "ingest":
            outputs = cmd_ingest(cfg, out_dir)
        elif args.command == "ovi":
            outputs = cmd_ovi(cfg, out_dir)
        elif args.command == "backtest":
            outputs = cmd_backtest(cfg, out_dir)
        elif args.command == "regress":
            outputs = cmd_regress(cfg, out_dir)
        elif args.command == "flow":
            outputs = cmd_flow(cfg, out_dir)
        elif args.command == "network":
            outputs = cmd_network(cfg, out_dir)
        else:
            outputs = cmd_report(cfg, out_dir, args.results, args.format)
        write_manifest(out_dir, args.command, cfg, outputs)
    except OviError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
