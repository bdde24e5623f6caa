"""Thin command-line client for the service.

By default the commands talk to the FastAPI app in-process (no server
needed); pass --server to point at a running deployment instead.

Exit codes: 0 all runs ok, 1 any run failed, 2 bad configuration.
"""

from __future__ import annotations

import json
import sys

import click
import httpx
from pydantic import ValidationError


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _fail_config(msg: str):
    click.echo(f"configuration error: {msg}", err=True)
    sys.exit(2)


@click.group()
def main():
    """Open-set domain adaptation experiment lab."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON experiment spec")
@click.option("--method", "methods", multiple=True, help="method to run (repeatable)")
@click.option("--seed", "seeds", multiple=True, type=int, help="training seed (repeatable)")
@click.option("--out", "out_dir", default=None, help="output directory")
@click.option("--weight-formula", type=click.Choice(["corrected", "literal"]), default=None)
@click.option("--no-reweight", is_flag=True, help="disable 1/r class reweighting")
@click.option("--epochs", type=int, default=None)
@click.option("--jobs", type=int, default=None, help="parallel runs")
@click.option("--server", default=None, help="base URL of a running service")
def run(config_path, methods, seeds, out_dir, weight_formula, no_reweight, epochs, jobs, server):
    """Run a method x seed sweep and print the summary."""
    doc = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            _fail_config(str(e))
    # flags override config-file values
    if methods:
        doc["methods"] = list(methods)
    if seeds:
        doc["seeds"] = list(seeds)
    if out_dir:
        doc["out_dir"] = out_dir
    if jobs:
        doc["jobs"] = jobs
    overrides = doc.setdefault("train_overrides", {})
    if weight_formula:
        overrides["weight_formula"] = weight_formula
    if no_reweight:
        overrides["reweight"] = False
    if epochs:
        overrides["epochs"] = epochs

    from .experiments import ExperimentSpec

    try:
        spec = ExperimentSpec.model_validate(doc)
    except ValidationError as e:
        _fail_config(str(e))

    with _client(server) as client:
        resp = client.post("/experiments/run", json=spec.model_dump(mode="json"))
    if resp.status_code == 422 or resp.status_code == 400:
        _fail_config(resp.text)
    resp.raise_for_status()
    result = resp.json()

    click.echo("method            seed   mAcc")
    for r in result["runs"]:
        macc = "failed" if r["macc"] is None else f"{r['macc']:.4f}"
        click.echo(f"{r['method']:<18}{r['seed']:<7}{macc}")
    click.echo("medians:")
    for method, entry in result["summary"].items():
        med = entry["median_macc"]
        click.echo(f"  {method:<18}{'n/a' if med is None else f'{med:.4f}'}")
    sys.exit(1 if result["n_failed"] else 0)


@main.command("generate-data")
@click.option("--out", "out_path", required=True)
@click.option("--c-known", type=int, default=4)
@click.option("--unknown-source", type=int, default=3)
@click.option("--unknown-target", type=int, default=3)
@click.option("--samples-per-class", type=int, default=100)
@click.option("--seed", type=int, default=0)
@click.option("--server", default=None)
def generate_data(out_path, c_known, unknown_source, unknown_target, samples_per_class, seed, server):
    """Write a synthetic benchmark as an interchange CSV."""
    body = {
        "spec": {
            "c_known": c_known,
            "n_unknown_source": unknown_source,
            "n_unknown_target": unknown_target,
            "samples_per_class": samples_per_class,
            "seed": seed,
        },
        "out_path": out_path,
    }
    with _client(server) as client:
        resp = client.post("/datasets/generate", json=body)
    if resp.status_code in (400, 422):
        _fail_config(resp.text)
    resp.raise_for_status()
    info = resp.json()
    click.echo(f"wrote {info['out_path']}: {info['n_source']} source / {info['n_target']} target rows")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
