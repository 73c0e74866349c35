"""Command-line front end: a thin client over the HTTP service.

By default every command talks to an in-process copy of the service through
an ASGI transport, so nothing needs to be running; --server or the
FEDSSP_SERVER variable points the same commands at a remote instance. Config
files are YAML, any key can be overridden with repeated --set flags, and
FEDSSP_SEED trumps every other way of setting the seed. Exit codes: 0 ok,
2 config error, 3 data error, 4 solver error, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys
from typing import Optional

import httpx

from .config import load_config
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    InfeasibleError,
    NumericalError,
    ProtocolError,
)
from .service.app import create_app

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

_KIND_CODES = {"config": EXIT_CONFIG, "data": EXIT_DATA, "solver": EXIT_SOLVER}


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class _InProcessTransport(httpx.BaseTransport):
    """Sync bridge running the service app on a private event loop."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app, raise_app_exceptions=False)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        # rebuilt from bytes so the request stream is async-iterable too
        req = httpx.Request(request.method, request.url,
                            headers=request.headers, content=request.read())

        async def call():
            resp = await self._asgi.handle_async_request(req)
            try:
                body = await resp.aread()
            finally:
                await resp.aclose()
            return resp, body

        resp, body = asyncio.run(call())
        return httpx.Response(resp.status_code, headers=resp.headers,
                              content=body)


def _client(server: Optional[str]) -> httpx.Client:
    server = server or os.environ.get("FEDSSP_SERVER")
    if server:
        return httpx.Client(base_url=server, timeout=None)
    return httpx.Client(transport=_InProcessTransport(create_app()),
                        base_url="http://fedssp.local", timeout=None)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code == 200:
        return resp.json()
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict) and "kind" in detail:
        kind = detail["kind"]
        raise CliFailure(_KIND_CODES.get(kind, 1),
                         f"{kind} error: {detail.get('message', '')}")
    if resp.status_code == 422:
        raise CliFailure(EXIT_CONFIG, f"invalid request: {resp.text}")
    raise CliFailure(1, f"service error {resp.status_code}: {resp.text}")


def _overrides(args: argparse.Namespace) -> list[str]:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return overrides


def cmd_fit(args: argparse.Namespace) -> int:
    config = load_config(args.config, overrides=_overrides(args))
    with _client(args.server) as client:
        body = _post(client, "/fit", {"config": config.model_dump()})
    print(f"fit: {body['rounds_completed']} rounds ({body['stopped']}), "
          f"objective {body['final_objective']:.6g}, "
          f"consensus {body['final_consensus']:.3e}")
    print(f"model: {body['model_path']}")
    print(f"history: {body['history_path']}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    payload: dict = {"model_dir": args.model}
    if args.quantile is not None:
        payload["quantile"] = args.quantile
    if args.test is not None:
        payload["test_path"] = args.test
    if args.out is not None:
        payload["out_dir"] = args.out
    with _client(args.server) as client:
        body = _post(client, "/detect", payload)
    r = body["report"]
    print("detect: acc {acc:.2f} pre {pre:.2f} recall {recall:.2f} "
          "fnr {fnr:.2f} f1 {f1:.2f}".format(**r))
    print(f"threshold {r['threshold']:.6g} "
          f"(tp {r['tp']} fp {r['fp']} tn {r['tn']} fn {r['fn']})")
    if r["degenerate"]:
        print("degenerate: " + ", ".join(r["degenerate"]))
    print(f"report: {body['report_path']}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config, overrides=_overrides(args))
    with _client(args.server) as client:
        body = _post(client, "/sweep", {"config": config.model_dump(),
                                        "p_values": args.p, "q_values": args.q})
    for cell in body["cells"]:
        if cell["status"] == "ok":
            print(f"{cell['cell']}: f1 {cell['f1']:.2f} acc {cell['acc']:.2f} "
                  f"recall {cell['recall']:.2f}")
        else:
            print(f"{cell['cell']}: error: {cell['error']}")
    print(f"table: {body['csv_path']}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = load_config(args.config, overrides=_overrides(args))
    if config.data.kind != "synth":
        raise ConfigError("synth needs a config with data.kind: synth")
    out_dir = args.out or config.out_dir
    with _client(args.server) as client:
        body = _post(client, "/synth", {"spec": config.data.model_dump(),
                                        "out_dir": out_dir,
                                        "seed": config.seed})
    print(f"synth: {body['n_train']} train / {body['n_test']} test samples")
    print(f"train: {body['train_path']}")
    print(f"test: {body['test_path']}")
    print(f"basis: {body['basis_path']}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    server = argparse.ArgumentParser(add_help=False)
    server.add_argument("--server", default=None,
                        help="base URL of a running service "
                             "(default: in-process; env FEDSSP_SERVER)")

    config = argparse.ArgumentParser(add_help=False)
    config.add_argument("-c", "--config", required=True,
                        help="YAML experiment config")
    config.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config key (dotted path, repeatable)")
    config.add_argument("--seed", type=int, default=None,
                        help="override the seed (env FEDSSP_SEED wins)")

    parser = argparse.ArgumentParser(
        prog="fedssp",
        description="federated structured-sparse subspace anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[server, config],
                       help="learn the shared projection and write a model dir")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", parents=[server],
                       help="score a labeled test set against a fitted model")
    p.add_argument("--model", required=True, help="fitted model directory")
    p.add_argument("--quantile", type=float, default=None,
                   help="training-score quantile for the threshold")
    p.add_argument("--test", default=None, help="test CSV overriding the config")
    p.add_argument("--out", default=None, help="report directory (default: model dir)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", parents=[server, config],
                       help="grid fit+detect over p and q exponents")
    p.add_argument("--p", type=float, nargs="+", required=True,
                   help="row-wise exponents to try")
    p.add_argument("--q", type=float, nargs="+", required=True,
                   help="element-wise exponents to try")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", parents=[server, config],
                       help="materialize a synthetic dataset as CSV files")
    p.add_argument("--out", default=None,
                   help="dataset directory (default: config out_dir)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliFailure as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ProtocolError, InfeasibleError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except httpx.HTTPError as exc:
        print(f"error: cannot reach the service: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
