"""Command line interface: ``dimerlab <subcommand>``.

Exit codes: 0 on success, 1 on usage errors, 2 on numeric or domain failures.
"""
from __future__ import annotations

import json
import os
import sys
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import DimerError, MalformedInput
from .io import RunManifest, Timer, fmt, manifest_path, write_face_csv


# ---------------------------------------------------------------------------
# input helpers


def resolve_path(path):
    """Existing files are used as given; otherwise fall back to a shipped preset of the same name."""
    p = Path(path)
    if p.is_file():
        return p
    name = p.name if p.suffix else p.name + ".json"
    cand = resources.files("dimerlab.presets").joinpath(name)
    if cand.is_file():
        return Path(str(cand))
    raise click.BadParameter(f"no such file or preset: {path}")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{path}: {exc}") from exc


def load_graph(path):
    from .lattice import PlanarGraph

    p = resolve_path(path)
    data = _load_json(p)
    if data.get("kind") != "graph":
        raise click.BadParameter(f"{path} is not a graph file (kind must be 'graph')")
    return PlanarGraph.from_dict(data), p


def load_fd(path):
    from .lattice import FundamentalDomain

    p = resolve_path(path)
    data = _load_json(p)
    if data.get("kind", "fundamental_domain") != "fundamental_domain":
        raise click.BadParameter(f"{path} is not a fundamental domain")
    return FundamentalDomain.from_dict(data), p


def _weights_arg(g, path):
    from .gibbs import load_weights

    return None if path is None else load_weights(g, path)


def _finish(manifest, outputs, timer):
    manifest.wall_time = round(timer.elapsed, 6)
    for out in outputs:
        manifest.add_output(out)
        manifest.write(manifest_path(out))


def _threads(ctx_threads):
    n = ctx_threads or os.environ.get("DIMERLAB_THREADS")
    if n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    return n


# ---------------------------------------------------------------------------
# commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="dimerlab")
@click.option("--threads", type=int, default=None, help="Cap on worker threads (falls back to DIMERLAB_THREADS).")
@click.pass_context
def cli(ctx, threads):
    """Dimer covers, height functions and limit shapes."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = _threads(threads)


@cli.command("enumerate")
@click.option("--graph", "graph_path", required=True, help="Graph JSON (or preset name).")
@click.option("--bc", "bc_path", default=None, help="Boundary heights JSON {face: value}.")
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Write covers as JSON edge lists.")
@click.option("--max-internal", default=40, show_default=True, help="Guard on internal vertices.")
def enumerate_cmd(graph_path, bc_path, out, max_internal):
    """Enumerate dimer covers (optionally with fixed boundary heights)."""
    from .covers import enumerate_covers, save_covers
    from .gibbs import BoundaryCondition, _covers

    with Timer() as timer:
        g, gp = load_graph(graph_path)
        covers = enumerate_covers(g, max_internal=max_internal)
        if bc_path is not None:
            covers = _covers(g, BoundaryCondition.load(bc_path), covers)
        click.echo(len(covers))
        if out:
            save_covers(covers, out)
    if out:
        m = RunManifest("enumerate", parameters={"max_internal": max_internal})
        m.add_input(gp)
        m.add_input(bc_path)
        _finish(m, [out], timer)


@cli.command("z")
@click.option("--graph", "graph_path", required=True, help="Graph JSON (or preset name).")
@click.option("--weights", "weights_path", default=None, help="Edge weights JSON {edge id: weight}.")
@click.option("--bc", "bc_path", default=None, help="Boundary heights JSON {face: value}.")
@click.option("--method", type=click.Choice(["auto", "kasteleyn", "enumerate"]), default="auto", show_default=True)
@click.option("--log", "as_log", is_flag=True, help="Print log Z instead of Z.")
def z_cmd(graph_path, weights_path, bc_path, method, as_log):
    """Partition function of a planar graph."""
    from .covers import _internal_count, reconstruct_delta, reference_cover
    from .gibbs import BoundaryCondition, partition_function
    from .kasteleyn import log_kasteleyn_count, log_kasteleyn_count_free

    g, _ = load_graph(graph_path)
    w = _weights_arg(g, weights_path)
    bc = BoundaryCondition.load(bc_path) if bc_path else None
    if method == "auto":
        method = "enumerate" if _internal_count(g) <= 24 else "kasteleyn"
    if method == "enumerate":
        if as_log:
            click.echo(fmt(partition_function(g, w, bc, log=True)))
        else:
            z = partition_function(g, w, bc, exact=True)
            click.echo(str(z.numerator) if z.denominator == 1 else fmt(float(z)))
        return
    if bc is not None:
        heights = np.zeros(g.n_faces, dtype=np.int64)
        for f, v in bc.values:
            heights[f] = v
        lz = log_kasteleyn_count(g, w, reconstruct_delta(g, heights, reference_cover(g)))
    elif np.any(g.boundary):
        lz = log_kasteleyn_count_free(g, w)
    else:
        lz = log_kasteleyn_count(g, w)
    click.echo(fmt(lz if as_log else (np.exp(lz) if np.isfinite(lz) else 0.0)))


@cli.command("newton")
@click.option("--fd", "fd_path", required=True, help="Fundamental domain JSON (or preset name).")
@click.option("--json", "as_json", is_flag=True, help="Print JSON instead of one vertex per line.")
def newton_cmd(fd_path, as_json):
    """Vertices of the Newton polygon (slopes of covers of the fundamental domain)."""
    from .covers import newton_polygon

    fd, _ = load_fd(fd_path)
    N = newton_polygon(fd)
    verts = [[int(a), int(b)] for a, b in N.vertices]
    if as_json:
        click.echo(json.dumps({"vertices": verts, "area": N.area}))
    else:
        for a, b in verts:
            click.echo(f"{a} {b}")


@cli.command("surface-tension")
@click.option("--fd", "fd_path", required=True, help="Fundamental domain JSON (or preset name).")
@click.option("--weights", "weights_path", default=None, help="Weights per fundamental-domain edge (JSON list).")
@click.option("--resolution", default=16, show_default=True, help="Table grid is (i/r, j/r).")
@click.option("--at", "at", nargs=2, type=float, default=None, help="Evaluate at a single slope instead.")
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Table CSV path.")
def surface_tension_cmd(fd_path, weights_path, resolution, at, out):
    """Tabulate (or evaluate) the surface tension of a periodic weighted graph."""
    from .kasteleyn import characteristic_polynomial
    from .surface import free_energy, surface_tension, tabulate_sigma

    with Timer() as timer:
        fd, fp = load_fd(fd_path)
        weights = None if weights_path is None else np.asarray(_load_json(weights_path), dtype=float)
        P = characteristic_polynomial(fd, weights)
        if at:
            click.echo(fmt(surface_tension(P, at[0], at[1])))
            return
        click.echo(f"free energy {fmt(free_energy(P))}")
        table = tabulate_sigma(P, resolution)
        bad = table.concavity_violations(1e-5)
        click.echo(f"{len(table.sigma)} points, {len(bad)} concavity violations")
        if out:
            table.to_csv(out)
    if out:
        m = RunManifest("surface-tension", parameters={"resolution": resolution})
        m.add_input(fp)
        m.add_input(weights_path)
        _finish(m, [out], timer)


def _load_region(path):
    data = _load_json(path)
    poly = data["polygon"] if isinstance(data, dict) else data
    return np.asarray(poly, dtype=float)


def _load_chi(path, region):
    """Boundary data: {"linear": [s, t, c]}, {"points": ..., "values": ...} or {"aztec": n}."""
    from .varsolve import boundary_function

    data = _load_json(path)
    if "linear" in data:
        s, t, c = data["linear"]
        return lambda p: s * np.atleast_2d(p)[:, 0] + t * np.atleast_2d(p)[:, 1] + c
    if "points" in data:
        return boundary_function(region, np.asarray(data["points"], float), np.asarray(data["values"], float))
    if "aztec" in data:
        from .verification import aztec_boundary

        return aztec_boundary(int(data["aztec"]))[1]
    raise MalformedInput("boundary file needs 'linear', 'points'/'values' or 'aztec'")


@cli.command("limit-shape")
@click.option("--region", "region_path", required=True, help="JSON polygon {\"polygon\": [[x, y], ...]}.")
@click.option("--bc", "bc_path", required=True, help="Boundary data JSON.")
@click.option("--sigma", "sigma_path", required=True, help="Surface tension table CSV.")
@click.option("--mesh", default=64, show_default=True)
@click.option("--tol", default=1e-7, show_default=True)
@click.option("--repair", default=0.0, show_default=True, help="Largest boundary inconsistency to repair.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--svg", "svg_path", default=None, type=click.Path(dir_okay=False))
def limit_shape_cmd(region_path, bc_path, sigma_path, mesh, tol, repair, out, svg_path):
    """Maximize the surface-tension functional with the given boundary data."""
    from .render import render_field
    from .surface import SurfaceTensionTable
    from .varsolve import VariationalProblem, solve

    with Timer() as timer:
        region = _load_region(region_path)
        chi = _load_chi(bc_path, region)
        table = SurfaceTensionTable.from_csv(sigma_path)
        res = solve(VariationalProblem(region, chi, table), m=mesh, tol=tol, repair_tol=repair)
        res.field.to_csv(out)
        click.echo(f"functional {fmt(res.value)} after {res.sweeps} sweeps "
                   f"({'converged' if res.converged else 'sweep cap reached'})")
        outs = [out]
        if svg_path:
            Path(svg_path).write_text(render_field(res.field), encoding="utf-8")
            outs.append(svg_path)
    m = RunManifest("limit-shape", parameters={"mesh": mesh, "tol": tol, "repair": repair})
    for p in (region_path, bc_path, sigma_path):
        m.add_input(p)
    _finish(m, outs, timer)


@cli.command("sample")
@click.option("--graph", "graph_path", required=True, help="Graph JSON (or preset name).")
@click.option("--weights", "weights_path", default=None)
@click.option("--bc", "bc_path", default=None, help="Boundary heights JSON {face: value}; default: all "
              "boundary vertices unmatched.")
@click.option("--steps", default="1e6", show_default=True)
@click.option("--burn", default="1e5", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--batches", default=32, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def sample_cmd(graph_path, weights_path, bc_path, steps, burn, seed, batches, out):
    """Mean height by face-rotation Markov chain with a fixed boundary condition."""
    from .gibbs import BoundaryCondition
    from .montecarlo import cover_with_unmatched, estimate_mean_height

    with Timer() as timer:
        g, gp = load_graph(graph_path)
        w = _weights_arg(g, weights_path)
        n_steps, n_burn = int(float(steps)), int(float(burn))
        if bc_path:
            est = estimate_mean_height(g, w, BoundaryCondition.load(bc_path), n_steps, n_burn, seed, batches)
        else:
            d = cover_with_unmatched(g, np.flatnonzero(g.boundary))
            est = estimate_mean_height(g, w, None, n_steps, n_burn, seed, batches, cover=d)
        write_face_csv(out, g, est.mean, est.stderr)
        click.echo(f"max standard error {fmt(est.stderr.max())}")
    m = RunManifest("sample", parameters={"steps": n_steps, "burn": n_burn, "batches": batches}, seed=seed)
    m.add_input(gp)
    m.add_input(weights_path)
    m.add_input(bc_path)
    _finish(m, [out], timer)


@cli.command("verify")
@click.argument("target", default="fast")
@click.option("--seed", default=0, show_default=True, type=int)
def verify_cmd(target, seed):
    """Run checks: fast, full (alias all), or a single check name."""
    from . import verification as V

    if target in ("full", "all"):
        names = V.FULL
    elif target == "fast":
        names = V.FAST
    elif target in V.CHECKS:
        names = (target,)
    else:
        raise click.BadParameter(f"unknown target {target!r}; choose fast, full, all or one of "
                                 + ", ".join(V.CHECKS))
    failed = 0
    for name in names:
        kwargs = dict(V.FAST_ARGS.get(name, {})) if target == "fast" else {}
        if "seed" in V.CHECKS[name].__code__.co_varnames:
            kwargs["seed"] = seed
        try:
            res = V.CHECKS[name](**kwargs)
        except DimerError as exc:
            click.echo(f"{name:<28} FAIL  {type(exc).__name__}: {exc}")
            failed += 1
            continue
        click.echo(res.line())
        failed += not res.ok
    click.echo(f"{len(names) - failed}/{len(names)} passed")
    if failed:
        sys.exit(2)


@cli.command("render")
@click.option("--graph", "graph_path", default=None, help="Graph JSON for a cover file.")
@click.option("--covers", "covers_path", default=None, help="Covers JSON from 'enumerate --out'.")
@click.option("--index", default=0, show_default=True, help="Which cover to draw.")
@click.option("--field", "field_path", default=None, help="Field CSV from 'limit-shape --out'.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def render_cmd(graph_path, covers_path, index, field_path, out):
    """Draw a cover or a height field as SVG."""
    from .calculus import AsymptoticHeightField
    from .covers import load_covers
    from .render import render_cover, render_field

    if field_path:
        fld = AsymptoticHeightField.from_csv(field_path)
        svg = render_field(fld)
    elif covers_path and graph_path:
        g, _ = load_graph(graph_path)
        covers = load_covers(g, covers_path)
        if not 0 <= index < len(covers):
            raise MalformedInput(f"cover index {index} out of range (0..{len(covers) - 1})")
        svg = render_cover(covers[index])
    else:
        raise click.UsageError("give --field, or --graph with --covers")
    Path(out).write_text(svg, encoding="utf-8")


def main(argv=None):
    try:
        rv = cli.main(args=argv, prog_name="dimerlab", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except DimerError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
