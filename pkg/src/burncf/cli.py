"""Command-line client for the burncf service.

By default each subcommand talks to an in-process instance of the HTTP
service; pass --server to target a running deployment instead.  Exit codes:
0 success, 1 internal failure, 2 usage or input error.
"""

from __future__ import annotations

import json
import sys

import click
import httpx
import yaml


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        if path.endswith((".yaml", ".yml")):
            loaded = yaml.safe_load(fh)
        else:
            loaded = json.load(fh)
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise click.UsageError(f"config file {path} must hold a mapping")
    return loaded


def _merge_config(config_file: str | None, overrides: dict) -> dict:
    merged: dict = {}
    if config_file:
        merged.update(_load_config_file(config_file))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if "hidden" in merged and isinstance(merged["hidden"], str):
        merged["hidden"] = [int(w) for w in merged["hidden"].split(",") if w]
    return merged


class Client:
    """HTTP client, either remote or wrapping the app in-process."""

    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service import app
            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach service: {exc}", err=True)
            sys.exit(1)
        if resp.status_code >= 500:
            click.echo(f"error: service failure: {_detail(resp)}", err=True)
            sys.exit(1)
        if resp.status_code >= 400:
            click.echo(f"error: {_detail(resp)}", err=True)
            sys.exit(2)
        return resp.json()


def _detail(resp) -> str:
    try:
        return str(resp.json().get("detail", resp.text))
    except ValueError:
        return resp.text


def _echo_json(payload: dict) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


_config_options = [
    click.option("--stages", type=int, default=None, help="Interest stage count K."),
    click.option("--horizon", type=float, default=None, help="Forward time range T."),
    click.option("--n-steps", type=int, default=None, help="Diffusion step count."),
    click.option("--reverse-horizon", type=float, default=None, help="Reverse range T'."),
    click.option("--mode", type=click.Choice(["bridge", "poisson"]), default=None),
    click.option("--rate-mode", type=click.Choice(["personalized", "global"]), default=None),
    click.option("--gamma", type=float, default=None, help="Collaborative decay weight."),
    click.option("--objective", type=click.Choice(["instantaneous", "finite_time"]),
                 default=None),
    click.option("--lr", type=float, default=None),
    click.option("--dropout", type=float, default=None),
    click.option("--batch-size", type=int, default=None),
    click.option("--patience", type=int, default=None),
    click.option("--max-epochs", type=int, default=None),
    click.option("--seed", type=int, default=None),
    click.option("--hidden", type=str, default=None,
                 help="Comma-separated encoder widths, e.g. 600,200."),
    click.option("--time-dim", type=int, default=None),
    click.option("--decay-scheme",
                 type=click.Choice(["burndown", "exponential_deterministic",
                                    "power", "linear"]), default=None),
    click.option("--decay-alpha", type=float, default=None),
    click.option("--decay-beta", type=float, default=None),
    click.option("--decay-lam", type=float, default=None),
    click.option("--valid-fraction", type=float, default=None),
    click.option("--workers", type=int, default=None),
]


def _with_config_options(fn):
    for opt in reversed(_config_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Burn-down diffusion collaborative filtering pipeline."""


_server_option = click.option("--server", default=None, metavar="URL",
                              help="Service URL; default runs in-process.")
_config_file_option = click.option("--config-file", default=None,
                                   type=click.Path(), help="YAML/JSON config file.")


@main.command()
@_server_option
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--users", "n_users", type=int, default=200, show_default=True)
@click.option("--items", "n_items", type=int, default=100, show_default=True)
@click.option("--blocks", "n_blocks", type=int, default=2, show_default=True)
@click.option("--holdout", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def synth(server, out_dir, n_users, n_items, n_blocks, holdout, seed):
    """Generate a block-structured synthetic train/test dataset."""
    payload = {"out_dir": out_dir, "n_users": n_users, "n_items": n_items,
               "n_blocks": n_blocks, "holdout": holdout, "seed": seed}
    _echo_json(Client(server).post("/synth", payload))


@main.command()
@_server_option
@_config_file_option
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@_with_config_options
def train(server, config_file, train_path, out_dir, **overrides):
    """Train a model; writes checkpoint, training log and validation curve."""
    config = _merge_config(config_file, overrides)
    payload = {"train_path": train_path, "out_dir": out_dir, "config": config}
    _echo_json(Client(server).post("/train", payload))


@main.command()
@_server_option
@_config_file_option
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--cutoff", type=int, default=50, show_default=True)
@click.option("--mode-override", type=click.Choice(["bridge", "poisson"]), default=None)
@_with_config_options
def recommend(server, config_file, checkpoint_path, train_path, out_dir,
              cutoff, mode_override, **overrides):
    """Sample ranked recommendation lists from a trained checkpoint."""
    config = _merge_config(config_file, overrides)
    payload = {"checkpoint_path": checkpoint_path, "train_path": train_path,
               "out_dir": out_dir, "cutoff": cutoff,
               "mode_override": mode_override, "config": config}
    _echo_json(Client(server).post("/recommend", payload))


@main.command()
@_server_option
@click.option("--recommendations", "recommendations_path", required=True,
              type=click.Path())
@click.option("--test", "test_path", required=True, type=click.Path())
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--cutoffs", default="10,20,50", show_default=True)
@click.option("--config-hash", default="", show_default=True)
def evaluate(server, recommendations_path, test_path, train_path, out_dir,
             cutoffs, config_hash):
    """Score recommendation lists against held-out interactions."""
    payload = {"recommendations_path": recommendations_path,
               "test_path": test_path, "train_path": train_path,
               "out_dir": out_dir,
               "cutoffs": [int(k) for k in cutoffs.split(",") if k],
               "config_hash": config_hash}
    _echo_json(Client(server).post("/evaluate", payload))


@main.command()
@_server_option
@click.option("--suites", default=None,
              help="Comma-separated suite names; default runs all.")
def verify(server, suites):
    """Run the oracle verification suites; exit 1 if any fails."""
    payload = {"suites": suites.split(",") if suites else None}
    out = Client(server).post("/verify", payload)
    for suite in out["suites"]:
        status = "PASS" if suite["passed"] else "FAIL"
        click.echo(f"{status} {suite['name']}: {suite['detail']} "
                   f"({suite['seconds']}s)")
    if not out["passed"]:
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
