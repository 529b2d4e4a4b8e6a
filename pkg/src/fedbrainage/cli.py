"""Command-line entry points.

    fedbrainage generate-data --config exp.json --out run/ [--seed N]
    fedbrainage train         --config exp.json --out run/ [--seed N] [--transport inproc]
    fedbrainage evaluate      --config exp.json --out run/
    fedbrainage stats         --config exp.json --out run/
    fedbrainage report        --config exp.json --out run/
    fedbrainage serve-server  --config exp.json --out run/ --listen 127.0.0.1:7000
    fedbrainage serve-client  --config exp.json --out run/ --connect 127.0.0.1:7000 --center-id 3
"""

from __future__ import annotations

import argparse
import logging
import os
import socket
import sys
import time
from dataclasses import replace
from pathlib import Path

from .brainage import write_predictions_csv
from .cohort import CohortSpec, generate_cohort, load_cohort_csv, write_cohort_csv
from .errors import ConfigError, FedBrainAgeError
from .federation import TcpServerTransport, client_update, run_tcp_client
from .harness.experiment import ExperimentConfig, ProtocolData, ProtocolRunner, load_cohort, train_config
from .harness.report import (
    build_report,
    ensure_brainage,
    prediction_path,
    run_statistics,
    write_round_history,
)

log = logging.getLogger("fedbrainage")


def _hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedbrainage", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate-data", "train", "evaluate", "stats", "report", "serve-server", "serve-client"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="ExperimentConfig JSON (defaults used when omitted)")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="override the seed list with a single seed")
        if name in ("train", "serve-server"):
            p.add_argument("--transport", choices=("inproc", "tcp"))
        if name == "serve-server":
            p.add_argument("--listen", type=_hostport, default=("127.0.0.1", 7000))
        if name == "serve-client":
            p.add_argument("--connect", type=_hostport, required=True)
            p.add_argument("--center-id", type=int, required=True)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None and args.command != "generate-data":
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = replace(cfg, seeds=[args.seed])
    if args.out is not None:
        cfg = replace(cfg, output_dir=str(args.out))
    return cfg


def _cohort(cfg: ExperimentConfig, args):
    """The run's cohort: out/cohort.csv when present, else the configured source (saved to out/)."""
    out = Path(cfg.output_dir)
    path = out / "cohort.csv"
    if path.exists():
        return load_cohort_csv(path)
    base = args.config.parent if args.config else None
    cohort = load_cohort(cfg, base)
    out.mkdir(parents=True, exist_ok=True)
    # several serve-* processes may race here; publish atomically
    tmp = path.with_name(f".cohort.{os.getpid()}.tmp")
    write_cohort_csv(cohort, tmp)
    os.replace(tmp, path)
    return cohort


def cmd_generate_data(cfg, args):
    if "generate" not in cfg.cohort:
        raise ConfigError("config.cohort: generate-data needs a 'generate' cohort source")
    spec_dict = dict(cfg.cohort["generate"])
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    spec = CohortSpec.from_dict(spec_dict)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cohort = generate_cohort(spec)
    write_cohort_csv(cohort, out / "cohort.csv")
    (out / "cohort_spec.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    print(f"wrote {len(cohort)} subjects to {out / 'cohort.csv'}")


def _write_run(cfg, runner, family, configuration, seed, records):
    path = prediction_path(cfg.output_dir, family, configuration, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_predictions_csv(records, path)
    if configuration == "federated":
        hist = {k: v for k, v in runner.round_histories.items() if k[0] == family and k[1] == seed}
        write_round_history(Path(cfg.output_dir) / "rounds" / f"{family}__federated__seed{seed}.csv", hist)
    print(f"{family}/{configuration}/seed {seed}: {len(records)} predictions -> {path}")


def cmd_train(cfg, args):
    if getattr(args, "transport", None) == "tcp":
        raise ConfigError("train uses the in-process transport; start serve-server and serve-client for TCP runs")
    cohort = _cohort(cfg, args)
    runner = ProtocolRunner(cfg, cohort)
    for seed in cfg.seeds:
        for family in cfg.families:
            for configuration in cfg.configurations:
                records = runner.run(family, configuration, seed)
                _write_run(cfg, runner, family, configuration, seed, records)


def cmd_evaluate(cfg, args):
    loaded = ensure_brainage(cfg, cfg.output_dir)
    if not loaded:
        raise FileNotFoundError(f"no predictions under {cfg.output_dir}; run train first")
    print(f"BrainAGE filled for {len(loaded)} prediction files")


def cmd_stats(cfg, args):
    cohort = _cohort(cfg, args)
    files = run_statistics(cfg, cfg.output_dir, cohort)
    print(f"wrote {len(files)} tables")


def cmd_report(cfg, args):
    cohort = _cohort(cfg, args)
    bundle = build_report(cfg, cfg.output_dir, cohort)
    print(f"report bundle: {len(bundle.files)} files in {bundle.out_dir}")


def cmd_serve_server(cfg, args):
    cohort = _cohort(cfg, args)
    host, port = args.listen
    data = ProtocolData(cfg, cohort)
    n_clients = len(set(data.centers.tolist()))
    with TcpServerTransport(host, port, timeout=cfg.timeout) as transport:
        print(f"listening on {transport.address[0]}:{transport.address[1]} for {n_clients} clients", flush=True)
        transport.accept_clients(n_clients)
        runner = ProtocolRunner(cfg, cohort, transport)
        for seed in cfg.seeds:
            for family in cfg.families:
                records = runner.run(family, "federated", seed)
                _write_run(cfg, runner, family, "federated", seed, records)


def cmd_serve_client(cfg, args):
    cohort = _cohort(cfg, args)
    data = ProtocolData(cfg, cohort)
    center = args.center_id
    if center not in set(data.centers.tolist()):
        raise ConfigError(f"--center-id {center} has no subjects in the cohort")
    sites = {}

    def handle(round_index, params, meta):
        key = (meta["family"], int(meta["seed"]), int(meta["fold"]))
        if key not in sites:
            sites[key] = data.client_site(*key, center)
        site = sites[key]
        tcfg = train_config(cfg, key[0], "federated", key[1], key[2], 0.0, float(meta["l2_penalty"]))
        return client_update(site, params, round_index, tcfg)

    host, port = args.connect
    deadline = time.monotonic() + cfg.timeout
    while True:
        try:
            served = run_tcp_client(host, port, center, int((data.centers == center).sum()), handle, cfg.timeout)
            break
        except ConnectionRefusedError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.2)
    print(f"client {center}: served {served} rounds")


COMMANDS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
    "report": cmd_report,
    "serve-server": cmd_serve_server,
    "serve-client": cmd_serve_client,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except (FedBrainAgeError, OSError, socket.timeout, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
