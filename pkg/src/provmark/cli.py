"""Command line client.

Every subcommand speaks HTTP to the service layer: by default an
in-process instance over ``--workspace``, or a remote one when
``--server`` is given.  Exit codes: 0 success, 2 verification rejected,
3 calibration missing, 4 bad input or format, 5 provenance mismatch.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .errors import EXIT_REJECTED


class ServiceClient:
    """One-shot request plumbing, in-process or remote."""

    def __init__(self, workspace: Path, server: str | None):
        self.workspace = workspace
        self.server = server

    def call(self, method: str, path: str, payload: dict | None = None,
             params: dict | None = None) -> dict:
        return self.call_many([(method, path, payload, params)], jobs=1)[0]

    def call_many(self, calls: list[tuple], jobs: int = 1) -> list[dict]:
        """Run requests (concurrently when jobs > 1), map errors to exits.

        Each returned dict is either the response body or, for a failed
        request, {"_error": msg, "_exit_code": n} so callers can report
        per-item problems without losing the rest of a batch.
        """
        try:
            if self.server is None:
                responses = self._in_process(calls, jobs)
            else:
                responses = self._remote(calls, jobs)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach service: {exc}", err=True)
            sys.exit(1)
        out = []
        for resp in responses:
            if resp.status_code // 100 == 2:
                out.append(resp.json())
            else:
                try:
                    body = resp.json()
                except json.JSONDecodeError:
                    body = {}
                out.append({"_error": body.get("error", f"HTTP {resp.status_code}"),
                            "_exit_code": int(body.get("exit_code", 1))})
        return out

    def _in_process(self, calls, jobs):
        from .service import create_app
        app = create_app(self.workspace)

        async def run_all():
            transport = httpx.ASGITransport(app=app)
            sem = asyncio.Semaphore(max(1, jobs))
            async with httpx.AsyncClient(transport=transport, timeout=None,
                                         base_url="http://provmark") as client:
                async def one(call):
                    method, path, payload, params = call
                    async with sem:
                        return await client.request(method, path, json=payload,
                                                    params=params)
                return await asyncio.gather(*(one(c) for c in calls))

        return asyncio.run(run_all())

    def _remote(self, calls, jobs):
        from concurrent.futures import ThreadPoolExecutor
        with httpx.Client(base_url=self.server, timeout=None) as client:
            def one(call):
                method, path, payload, params = call
                return client.request(method, path, json=payload, params=params)
            if jobs <= 1 or len(calls) == 1:
                return [one(c) for c in calls]
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(one, calls))


def _fail_if_error(data: dict):
    if "_error" in data:
        click.echo(f"error: {data['_error']}", err=True)
        sys.exit(data["_exit_code"])
    return data


@click.group()
@click.option("--workspace", "-w", envvar="PROVMARK_WORKSPACE",
              type=click.Path(path_type=Path), default=Path("workspace"),
              show_default=True, help="workspace directory (in-process mode)")
@click.option("--server", metavar="URL", default=None,
              help="URL of a running service; overrides --workspace")
@click.pass_context
def main(ctx, workspace: Path, server: str | None):
    """Provenance watermarking: register keys, generate, verify, audit."""
    ctx.obj = ServiceClient(workspace, server)


@main.command()
@click.argument("user_id")
@click.option("--seed", type=int, default=None, help="deterministic key draw")
@click.pass_obj
def register(client: ServiceClient, user_id: str, seed: int | None):
    """Create and store a key for USER_ID."""
    data = _fail_if_error(client.call("POST", "/register",
                                      {"user_id": user_id, "seed": seed}))
    click.echo(f"registered {data['user_id']}  key fingerprint {data['fingerprint']}")


@main.command()
@click.argument("user_id")
@click.option("-n", "count", type=int, default=1, show_default=True,
              help="number of images")
@click.option("--timestamp", "timestamps", type=int, multiple=True,
              help="explicit generation timestamps (one per image)")
@click.option("--preview", is_flag=True, help="also write 8-bit PGM previews")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def generate(client: ServiceClient, user_id: str, count: int,
             timestamps: tuple[int, ...], preview: bool, as_json: bool):
    """Generate watermarked images for USER_ID."""
    payload = {"user_id": user_id, "n": count, "preview": preview,
               "timestamps": list(timestamps) if timestamps else None}
    data = _fail_if_error(client.call("POST", "/generate", payload))
    if as_json:
        click.echo(json.dumps(data, indent=2))
        return
    for path in data["paths"]:
        click.echo(path)


@main.command()
@click.argument("user_id")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def calibrate(client: ServiceClient, user_id: str, seed: int, as_json: bool):
    """Fit verification thresholds and the localization baseline."""
    data = _fail_if_error(client.call("POST", "/calibrate",
                                      {"user_id": user_id, "seed": seed}))
    if as_json:
        click.echo(json.dumps(data, indent=2))
        return
    click.echo(f"vanilla threshold     {data['tau_vanilla']:.4f}")
    click.echo(f"holdout KS            {data['ks_stat']:.4f} (p = {data['ks_pvalue']:.4f})")
    click.echo(f"holdout abnormal rate {data['abnormal_rate']:.3f}")
    click.echo(f"ownership pool        {data['ownership_pool_total']} samples")


@main.command()
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(path_type=Path))
@click.option("--user", "user_id", default=None,
              help="claim this user instead of the sidecar's")
@click.option("--from-preview", is_flag=True,
              help="verify the quantized PGM preview instead of the tensor")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def verify(client: ServiceClient, paths: tuple[Path, ...], user_id: str | None,
           from_preview: bool, jobs: int, as_json: bool):
    """Check ownership of generated images."""
    calls = [("POST", "/verify", {"path": str(p), "user_id": user_id,
                                  "from_preview": from_preview}, None)
             for p in paths]
    results = client.call_many(calls, jobs=jobs)
    if as_json:
        click.echo(json.dumps(results, indent=2))
    exit_code = 0
    for path, data in zip(paths, results):
        if "_error" in data:
            click.echo(f"{path}: error: {data['_error']}", err=True)
            exit_code = exit_code or data["_exit_code"]
            continue
        if not as_json:
            click.echo(f"{path}: {data['classification']}  "
                       f"(moment {data['second_moment']:.4f}, "
                       f"D_det {data['distance_detection']:.2f}, "
                       f"D_own {data['distance_ownership']:.2f})")
        if not data["ownership_affirmed"]:
            exit_code = exit_code or EXIT_REJECTED
    sys.exit(exit_code)


@main.command()
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(path_type=Path))
@click.option("--user", "user_id", default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def localize(client: ServiceClient, paths: tuple[Path, ...],
             user_id: str | None, jobs: int, as_json: bool):
    """Locate tampered regions in watermarked images."""
    calls = [("POST", "/localize", {"path": str(p), "user_id": user_id}, None)
             for p in paths]
    results = client.call_many(calls, jobs=jobs)
    if as_json:
        click.echo(json.dumps(results, indent=2))
    exit_code = 0
    for path, data in zip(paths, results):
        if "_error" in data:
            click.echo(f"{path}: error: {data['_error']}", err=True)
            exit_code = exit_code or data["_exit_code"]
            continue
        if not as_json:
            state = (f"tampered ({data['tampered_pixels']} px)"
                     if data["flagged"] else "no tamper found")
            click.echo(f"{path}: {state}")
    sys.exit(exit_code)


@main.command()
@click.argument("user_id")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "csv_path", type=click.Path(path_type=Path),
              default=None, help="CSV destination [workspace/bench.csv]")
@click.option("--skip-optimization", is_flag=True,
              help="leave out the slow finite-difference attacks")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def attack(client: ServiceClient, user_id: str, seed: int,
           csv_path: Path | None, skip_optimization: bool, as_json: bool):
    """Run the attack bench against USER_ID's calibrated verifier."""
    payload = {"user_id": user_id, "seed": seed,
               "include_optimization": not skip_optimization,
               "csv_path": str(csv_path) if csv_path else None}
    data = _fail_if_error(client.call("POST", "/attack", payload))
    if as_json:
        click.echo(json.dumps(data, indent=2))
        return
    for name, cell in data["summary"].items():
        if not isinstance(cell, dict) or "owned_rate" not in cell:
            continue
        click.echo(f"{name:24s} owned {cell['owned_rate']:.2f}  "
                   f"detected {cell['detected_rate']:.2f}  "
                   f"spoof-flag {cell['spoof_flag_rate']:.2f}")
    click.echo(f"rows written to {data['csv_path']}")


@main.command()
@click.option("--m", type=float, default=1.1, show_default=True,
              help="wrong-key deflection ratio")
@click.option("--q", type=float, default=0.9, show_default=True,
              help="plain-claim inverse coefficient")
@click.option("--n-trials", type=int, default=4000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def theory(client: ServiceClient, m: float, q: float, n_trials: int,
           seed: int, as_json: bool):
    """Closed-form bias predictions with Monte-Carlo cross-checks."""
    data = _fail_if_error(client.call(
        "GET", "/theory", None,
        {"m": m, "q": q, "n_trials": n_trials, "seed": seed}))
    if as_json:
        click.echo(json.dumps(data, indent=2))
        return
    click.echo(f"{'t':>4s} {'valid':>12s} {'wrong-key':>12s} {'plain':>12s}")
    for t in data["t_values"]:
        cf = data["per_t"][str(t)]["closed_form"]
        click.echo(f"{t:4d} {cf['valid']:12.4e} {cf['wrong']:12.4e} "
                   f"{cf['plain_claim']:12.4e}")
    click.echo(f"plain claim exceeds valid: {data['plain_claim_exceeds_valid']}")
    click.echo(f"valid moment monotone in t: {data['valid_moment_monotone_in_t']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8326, show_default=True)
@click.pass_obj
def serve(client: ServiceClient, host: str, port: int):
    """Run the HTTP service over the workspace."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(client.workspace), host=host, port=port)


if __name__ == "__main__":
    main()
