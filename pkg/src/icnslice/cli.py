"""slicectl: scripted runs, a live server, and quick view inspection."""

from __future__ import annotations

import json
import sys

import click

from .control import EmulationServer, load_json


@click.group()
def main() -> None:
    """Deterministic conference-slicing emulator."""


@main.command()
@click.option("--topology", required=True, type=click.Path(exists=True))
@click.option("--scenario", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", type=click.Path(), default=None,
              help="Write the event log as newline-delimited JSON.")
@click.option("--metrics-out", type=click.Path(), default=None)
def run(topology: str, scenario: str, seed: int, out: str | None,
        metrics_out: str | None) -> None:
    """Run a scenario script to completion and print the summary."""
    server = EmulationServer(load_json(topology), seed=seed)
    summary = server.run_scenario(load_json(scenario))
    if out:
        n = server.write_log(out)
        click.echo(f"wrote {n} records to {out}", err=True)
    if metrics_out:
        with open(metrics_out, "w") as fh:
            json.dump(server.net.metrics.view(), fh, indent=2, sort_keys=True)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--topology", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--time-scale", default=1.0, show_default=True, type=float,
              help="Sim ms advanced per wall ms; 0 freezes the clock so "
                   "POST /clock/advance drives time.")
def serve(topology: str, seed: int, port: int, host: str,
          time_scale: float) -> None:
    """Serve the management API over a live emulation."""
    import uvicorn

    from .api import create_app

    server = EmulationServer(load_json(topology), seed=seed,
                             time_scale=time_scale if time_scale > 0 else None)
    uvicorn.run(create_app(server), host=host, port=port, log_level="warning")


@main.command()
@click.option("--url", default="http://127.0.0.1:8080", show_default=True)
def views(url: str) -> None:
    """Fetch and pretty-print the state views of a running server."""
    import httpx

    try:
        payload = httpx.get(f"{url.rstrip('/')}/views", timeout=10.0).json()
    except httpx.HTTPError as e:
        click.echo(f"cannot reach {url}: {e}", err=True)
        sys.exit(1)
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
