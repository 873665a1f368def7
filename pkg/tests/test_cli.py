import json
import re

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.spatial import Delaunay

from dimerlab.calculus import AsymptoticHeightField
from dimerlab.cli import cli, main
from dimerlab.covers import enumerate_covers
from dimerlab.errors import MalformedInput
from dimerlab.io import RunManifest, read_face_csv
from dimerlab.lattice import cycle_graph
from dimerlab.render import render_cover, render_field


def run(*args):
    return CliRunner().invoke(cli, list(args), catch_exceptions=False)


def test_z_of_aztec2_is_eight():
    r = run("z", "--graph", "presets/aztec2.json")
    assert r.exit_code == 0
    assert r.output.strip() == "8"


def test_z_methods_agree():
    a = float(run("z", "--graph", "aztec3", "--method", "kasteleyn").output)
    b = float(run("z", "--graph", "aztec3", "--method", "enumerate").output)
    assert a == pytest.approx(b) == 64


def test_newton_square():
    r = run("newton", "--fd", "presets/square.json")
    assert r.output.split("\n")[:4] == ["-1 -1", "0 -1", "0 0", "-1 0"]


def test_surface_tension_single_slope():
    r = run("surface-tension", "--fd", "square", "--at", "-0.5", "-0.5")
    assert float(r.output) == pytest.approx(0.5831218080616, abs=1e-10)


def test_exit_codes(tmp_path):
    assert main(["newton", "--fd", "square"]) == 0
    assert main(["no-such-command"]) == 1
    assert main(["z", "--graph", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["z", "--graph", str(bad)]) == 2
    assert main(["surface-tension", "--fd", "square", "--at", "0.5", "0.5"]) == 2


def test_enumerate_and_render_with_manifest(tmp_path):
    covers = tmp_path / "c.json"
    assert run("enumerate", "--graph", "aztec2", "--out", str(covers)).output.strip() == "8"
    m = RunManifest.load(str(covers) + ".manifest.json")
    assert m.command == "enumerate" and str(covers) in m.outputs
    svg = tmp_path / "c.svg"
    run("render", "--graph", "aztec2", "--covers", str(covers), "--index", "3", "--out", str(svg))
    assert svg.read_text().count('class="dimer"') == 6


def test_sample_is_reproducible(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"h{k}.csv"
        r = run("sample", "--graph", "aztec3", "--steps", "2e4", "--burn", "1e3", "--seed", "4", "--out", str(out))
        assert r.exit_code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    data = read_face_csv(tmp_path / "h0.csv")
    assert set(data.dtype.names) == {"face", "x", "y", "value", "stderr"}


def test_limit_shape_pipeline(tmp_path):
    sigma = tmp_path / "sigma.csv"
    run("surface-tension", "--fd", "square", "--resolution", "4", "--out", str(sigma))
    region = tmp_path / "region.json"
    region.write_text(json.dumps({"polygon": [[0, 0], [1, 0], [1, 1], [0, 1]]}))
    bc = tmp_path / "chi.json"
    bc.write_text(json.dumps({"linear": [-0.5, -0.25, 0.0]}))
    out, svg = tmp_path / "g.csv", tmp_path / "g.svg"
    r = run("limit-shape", "--region", str(region), "--bc", str(bc), "--sigma", str(sigma), "--mesh", "8",
            "--out", str(out), "--svg", str(svg))
    assert r.exit_code == 0 and "converged" in r.output
    fld = AsymptoticHeightField.from_csv(out)
    assert np.allclose(fld.values, -0.5 * fld.points[:, 0] - 0.25 * fld.points[:, 1], atol=1e-6)
    assert 'class="level"' in svg.read_text()
    assert (tmp_path / "g.csv.manifest.json").is_file()


def test_verify_single_check():
    r = CliRunner().invoke(cli, ["verify", "charpoly"])
    assert r.exit_code == 0 and "PASS" in r.output


def test_render_four_cycle_has_two_dimers():
    svg = render_cover(enumerate_covers(cycle_graph())[0])
    assert svg.count('class="dimer"') == 2
    assert svg == render_cover(enumerate_covers(cycle_graph())[0])


def test_render_field_level_sets_nest():
    # a radial bump: contours are nested closed curves, higher levels closer to the centre
    xs = np.linspace(-1, 1, 21)
    pts = np.array([(x, y) for x in xs for y in xs])
    vals = -np.hypot(pts[:, 0], pts[:, 1])
    fld = AsymptoticHeightField(pts, vals, Delaunay(pts).simplices, 0.1)
    svg = render_field(fld, levels=6)
    radii = {}
    for m in re.finditer(r'data-level="([-\d.e]+)" x1="([\d.]+)" y1="([\d.]+)"', svg):
        lvl, x, y = float(m.group(1)), float(m.group(2)), float(m.group(3))
        radii.setdefault(lvl, []).append(np.hypot(x - 256, y - 256))
    means = [np.mean(radii[k]) for k in sorted(radii)]
    assert all(a > b for a, b in zip(means, means[1:]))
    with pytest.raises(MalformedInput):
        render_field(AsymptoticHeightField(pts, vals * np.nan, Delaunay(pts).simplices, 0.1))
