"""Command-line entry points.

Batch subcommands (replay, ablate, sweep, synth-gen) call the library
directly so runs stay offline and byte-reproducible; serve launches the
HTTP service; the remaining subcommands are a thin client for a running
service, printing its JSON responses verbatim.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import httpx

from .data_io import save_csv, synth_attribute_names, synth_stream
from .model import Batch
from .runner import (
    DEFAULT_LAMBDAS,
    config_from_dict,
    default_synth_config,
    run_ablation,
    run_replay,
    run_sweep,
    summarize,
)
from .service.config import service_config_from_dict


class CliError(Exception):
    """Failure with a machine-readable code for the error summary."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        loaded = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError("config_unreadable", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise CliError("config_invalid", f"{path}: {exc}") from None
    if not isinstance(loaded, dict):
        raise CliError("config_invalid", f"{path}: expected a JSON object")
    return loaded


def _overrides(args, names) -> dict:
    """Only the flags the user actually passed (everything defaults to None)."""
    return {name: getattr(args, name) for name in names if getattr(args, name) is not None}


RUN_OVERRIDES = (
    "model", "lam", "alpha", "epoch_size", "epochs", "seed",
    "smote", "smote_k", "smote_ratio", "biased_init", "self_evolving",
    "margin_tau", "bootstrap_fraction", "oracle_flip_probability", "input_csv",
)


def _run_config(args):
    base = _load_config_file(args.config)
    base.update(_overrides(args, RUN_OVERRIDES))
    if base.get("input_csv") is None and base.get("synth") is None:
        base["synth"] = asdict(default_synth_config(seed=int(base.get("seed", 0))))
    try:
        return config_from_dict(base)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("config_invalid", str(exc)) from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its fields")
    p.add_argument("--model", choices=("l1ls", "mcl1ls", "mcl21ls"))
    p.add_argument("--lam", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epoch-size", dest="epoch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--smote", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--smote-k", dest="smote_k", type=int)
    p.add_argument("--smote-ratio", dest="smote_ratio", type=float)
    p.add_argument("--biased-init", dest="biased_init",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--self-evolving", dest="self_evolving",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--margin-tau", dest="margin_tau", type=float)
    p.add_argument("--bootstrap-fraction", dest="bootstrap_fraction", type=float)
    p.add_argument("--flip-probability", dest="oracle_flip_probability", type=float)
    p.add_argument("--input-csv", dest="input_csv")
    p.add_argument("--out", help="run directory for artifacts")


def cmd_replay(args) -> int:
    result = run_replay(_run_config(args), out_dir=args.out)
    summary = summarize(result.config, result.reports)
    summary["alpha_used"] = result.alpha_used
    _emit(summary)
    return 0


def cmd_ablate(args) -> int:
    axes = tuple(args.axes.split(",")) if args.axes else ("smote", "biased_init", "self_evolving")
    try:
        rows = run_ablation(_run_config(args), out_dir=args.out, axes=axes)
    except ValueError as exc:
        raise CliError("config_invalid", str(exc)) from None
    _emit(rows)
    return 0


def cmd_sweep(args) -> int:
    lambdas = (
        tuple(float(v) for v in args.lambdas.split(",")) if args.lambdas else DEFAULT_LAMBDAS
    )
    result = run_sweep(_run_config(args), out_dir=args.out, lambdas=lambdas, top_k=args.top_k)
    _emit(result)
    return 0


def cmd_synth_gen(args) -> int:
    scfg = default_synth_config(
        seed=args.seed, d=args.d, shift=args.shift, noise=args.noise,
        rate=args.rate,
    )
    epochs = synth_stream(scfg, epochs=args.epochs, epoch_size=args.epoch_size)
    records = tuple(r for e in epochs for r in e.batch.records)
    labels = [t for e in epochs for t in e.truth]
    save_csv(args.out, Batch(records=records), synth_attribute_names(args.d), labels=labels)
    _emit({"out": str(args.out), "records": len(records), "epochs": args.epochs})
    return 0


SERVE_OVERRIDES = (
    "mode", "model", "lam", "alpha", "seed", "epoch_size", "smote",
    "biased_init", "margin_tau", "bootstrap_fraction", "input_csv",
    "replay_oracle", "verification_timeout_s", "event_log", "port",
)


def cmd_serve(args) -> int:
    base = _load_config_file(args.config)
    base.update(_overrides(args, SERVE_OVERRIDES))
    if args.attribute_names is not None:
        base["attribute_names"] = args.attribute_names.split(",")
    if args.class_names is not None:
        base["class_names"] = args.class_names.split(",")
    try:
        cfg = service_config_from_dict(base)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("config_invalid", str(exc)) from None

    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(cfg), host=args.host, port=cfg.port)
    return 0


def _request(args, method: str, path: str, **kwargs):
    url = args.url.rstrip("/") + path
    try:
        response = httpx.request(method, url, timeout=60.0, **kwargs)
    except httpx.HTTPError as exc:
        raise CliError("service_unreachable", f"{url}: {exc}") from None
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail")
        except ValueError:
            detail = None
        if isinstance(detail, dict) and "code" in detail:
            raise CliError(detail["code"], detail.get("message", response.text))
        raise CliError(f"http_{response.status_code}", response.text)
    _emit(response.json())
    return 0


def cmd_queue_ls(args) -> int:
    params = {"page": args.page, "page_size": args.page_size}
    if args.status:
        params["status"] = args.status
    return _request(args, "GET", "/v1/queue", params=params)


def cmd_label(args) -> int:
    body = {"record_id": args.record_id, "class_name": args.class_name}
    return _request(args, "POST", "/v1/labels", json=body)


def cmd_missed(args) -> int:
    body = {"record_id": args.record_id, "class_name": args.class_name}
    return _request(args, "POST", "/v1/missed", json=body)


def cmd_metrics(args) -> int:
    params = {"start": args.start}
    if args.count is not None:
        params["count"] = args.count
    return _request(args, "GET", "/v1/metrics", params=params)


def cmd_status(args) -> int:
    return _request(args, "GET", "/v1/status")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evodetect",
        description="Self-evolving anomaly detection: batch runs and service client.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", help="run the evolution loop offline with an oracle labeler")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("ablate", help="one replay per toggle combination")
    _add_run_flags(p)
    p.add_argument("--axes", help="comma list drawn from smote,biased_init,self_evolving")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("sweep", help="attribute rankings across a lambda grid")
    _add_run_flags(p)
    p.add_argument("--lambdas", help="comma list of regularization strengths")
    p.add_argument("--top-k", dest="top_k", type=int, default=10)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("synth-gen", help="write a labeled synthetic telemetry CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--epoch-size", dest="epoch_size", type=int, default=300)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--shift", type=float, default=0.45)
    p.add_argument("--noise", type=float, default=0.07)
    p.add_argument("--rate", type=float, default=0.2)
    p.set_defaults(fn=cmd_synth_gen)

    p = sub.add_parser("serve", help="launch the HTTP service")
    p.add_argument("--config", help="JSON service config; flags override its fields")
    p.add_argument("--mode", choices=("live", "replay"))
    p.add_argument("--model", choices=("l1ls", "mcl1ls", "mcl21ls"))
    p.add_argument("--lam", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epoch-size", dest="epoch_size", type=int)
    p.add_argument("--smote", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--biased-init", dest="biased_init",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--margin-tau", dest="margin_tau", type=float)
    p.add_argument("--bootstrap-fraction", dest="bootstrap_fraction", type=float)
    p.add_argument("--input-csv", dest="input_csv")
    p.add_argument("--replay-oracle", dest="replay_oracle",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--timeout", dest="verification_timeout_s", type=float)
    p.add_argument("--event-log", dest="event_log")
    p.add_argument("--attribute-names", dest="attribute_names",
                   help="comma list; required for live mode without a config file")
    p.add_argument("--class-names", dest="class_names", help="comma list, normal first")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.set_defaults(fn=cmd_serve)

    def add_client(name, fn, help_text):
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--url", default="http://127.0.0.1:8000")
        q.set_defaults(fn=fn)
        return q

    p = add_client("queue-ls", cmd_queue_ls, "list the verification queue")
    p.add_argument("--status", choices=("pending", "verified"))
    p.add_argument("--page", type=int, default=0)
    p.add_argument("--page-size", dest="page_size", type=int, default=50)

    p = add_client("label", cmd_label, "submit a verdict for a flagged record")
    p.add_argument("--record-id", dest="record_id", required=True)
    p.add_argument("--class-name", dest="class_name", required=True)

    p = add_client("missed", cmd_missed, "report an anomaly the detector passed as normal")
    p.add_argument("--record-id", dest="record_id", required=True)
    p.add_argument("--class-name", dest="class_name", required=True)

    p = add_client("metrics", cmd_metrics, "fetch epoch reports")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int)

    add_client("status", cmd_status, "fetch the service status summary")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(json.dumps({"error": {"code": exc.code, "message": exc.message}}),
              file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": {"code": "runtime_error", "message": str(exc)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
