"""Command-line interface: a thin client over the service layer.

Subcommands load a TOML config, execute in-process through the same
runner functions the HTTP service uses, and write their outputs locally;
with ``--server URL`` the computation is delegated to a running service
instead. Exit codes: 0 success/pass, 1 certified fail (a probe found a
counterexample or a bound violation), 2 runtime error, 3 config error.
``SDD_LOG`` selects the log level (error, warn, info, debug).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile

from .config import ConfigError, RunConfig, load_config
from .runs import (
    attractor_run,
    check_delay_run,
    report_json,
    simulate_run,
    verify_run,
)
from .solver import SolverError
from .verify import VerifyError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_RUNTIME = 2
EXIT_CONFIG = 3

log = logging.getLogger("sddsim")


_handler_installed = False


def _setup_logging() -> None:
    global _handler_installed
    level_name = os.environ.get("SDD_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    if not _handler_installed:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        log.addHandler(handler)
        _handler_installed = True
    log.setLevel(levels.get(level_name, logging.WARNING))


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sddsim-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _diag(message: str) -> None:
    print(f"sddsim: {message}", file=sys.stderr)


def _post(server: str, endpoint: str, payload: dict, result_model):
    import httpx

    url = server.rstrip("/") + endpoint
    resp = httpx.post(url, json=payload, timeout=None)
    if resp.status_code == 422:
        raise ConfigError(resp.json().get("detail", resp.text))
    if resp.status_code != 200:
        raise SolverError(f"server returned {resp.status_code}: {resp.text[:500]}")
    return result_model.model_validate(resp.json())


def _load(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config)


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.server:
        from .runs import SimulateResult

        result = _post(
            args.server,
            "/simulate",
            {
                "config": cfg.model_dump(mode="json"),
                "residual": args.residual,
                "include_timing": not args.no_timing,
            },
            SimulateResult,
        )
    else:
        result = simulate_run(cfg, residual=args.residual, include_timing=not args.no_timing)
    _atomic_write(args.out, result.csv)
    if result.residual is not None:
        residual_path = args.out + ".residual.json"
        _atomic_write(
            residual_path,
            json.dumps(result.residual.model_dump(), sort_keys=True, indent=2) + "\n",
        )
    if args.report:
        _atomic_write(args.report, report_json(result.report))
    return EXIT_OK


def _write_or_print(result, out: str | None) -> None:
    text = report_json(result)
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _cmd_check_delay(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.server:
        from .runs import CheckDelayResult

        result = _post(
            args.server,
            "/check-delay",
            {
                "config": cfg.model_dump(mode="json"),
                "seed": args.seed,
                "include_timing": not args.no_timing,
            },
            CheckDelayResult,
        )
    else:
        result = check_delay_run(cfg, seed=args.seed, include_timing=not args.no_timing)
    _write_or_print(result, args.out)
    return EXIT_OK if result.passed else EXIT_FAIL


def _cmd_verify(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.server:
        from .runs import VerifyResult

        result = _post(
            args.server,
            "/verify",
            {
                "config": cfg.model_dump(mode="json"),
                "suite": args.suite,
                "seed": args.seed,
                "include_timing": not args.no_timing,
            },
            VerifyResult,
        )
    else:
        result = verify_run(cfg, suite=args.suite, seed=args.seed, include_timing=not args.no_timing)
    _write_or_print(result, args.out)
    return EXIT_OK if result.passed else EXIT_FAIL


def _cmd_attractor(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.server:
        from .runs import AttractorResult

        result = _post(
            args.server,
            "/attractor",
            {
                "config": cfg.model_dump(mode="json"),
                "t_long": args.T_long,
                "ensemble_size": args.ensemble_size,
                "seed": args.seed,
                "include_timing": not args.no_timing,
            },
            AttractorResult,
        )
    else:
        result = attractor_run(
            cfg,
            t_long=args.T_long,
            ensemble_size=args.ensemble_size,
            seed=args.seed,
            include_timing=not args.no_timing,
        )
    _write_or_print(result, args.out)
    return EXIT_OK if result.passed else EXIT_FAIL


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sddsim",
        description="Simulate and verify differential equations with state-dependent delay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to a TOML run configuration")
    common.add_argument("--server", help="delegate to a running sddsim service at this URL")
    common.add_argument(
        "--no-timing", action="store_true", help="omit wall-clock timing for byte-stable reports"
    )

    p_sim = sub.add_parser("simulate", parents=[common], help="solve and write a trajectory CSV")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument(
        "--residual",
        action="store_true",
        help="also check the mild-equation defect (writes <out>.residual.json)",
    )
    p_sim.add_argument("--report", help="optional JSON run-report path")
    p_sim.set_defaults(fn=_cmd_simulate)

    p_chk = sub.add_parser(
        "check-delay", parents=[common], help="report the delayed segment and fuzz ignorance"
    )
    p_chk.add_argument("--seed", type=int, help="overrides [verify].seed")
    p_chk.add_argument("--out", help="write the JSON report here instead of stdout")
    p_chk.set_defaults(fn=_cmd_check_delay)

    p_ver = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p_ver.add_argument(
        "--suite",
        choices=["ignorance", "uniqueness", "dependence", "attractor", "all"],
        default="all",
    )
    p_ver.add_argument("--seed", type=int, help="overrides [verify].seed")
    p_ver.add_argument("--out", help="write the JSON report here instead of stdout")
    p_ver.set_defaults(fn=_cmd_verify)

    p_att = sub.add_parser(
        "attractor", parents=[common], help="long-run dissipation and regularity diagnostics"
    )
    p_att.add_argument("--T-long", dest="T_long", type=float, help="overrides [verify].T_long")
    p_att.add_argument(
        "--ensemble-size", dest="ensemble_size", type=int, help="overrides [verify].ensemble_size"
    )
    p_att.add_argument("--seed", type=int, help="overrides [verify].seed")
    p_att.add_argument("--out", help="write the JSON report here instead of stdout")
    p_att.set_defaults(fn=_cmd_attractor)

    p_srv = sub.add_parser("serve", help="start the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        _diag(str(exc).splitlines()[0] if str(exc) else "invalid configuration")
        return EXIT_CONFIG
    except (SolverError, VerifyError) as exc:
        _diag(str(exc))
        return EXIT_RUNTIME
    except OSError as exc:
        _diag(str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
