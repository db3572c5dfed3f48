import json

import numpy as np
import pytest

from pinched.cli import build_parser, main, parse_length
from pinched.circle_rotation import GOLDEN
from pinched.config import ConfigError, RunConfig, apply_pairs, validate
from pinched.export import read_graph_csv, write_graph_csv
from pinched.boundary import GraphSample


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def manifest_files(out):
    return json.loads((out / "manifest.json").read_text())["files"]


def test_boundary_row_count_and_manifest(tmp_path):
    code, out = run(tmp_path, "b", "boundary", "--grid-n", "10", "--n-max", "3", "--svg")
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["manifest.json", "phi_000.csv", "phi_001.csv", "phi_002.csv", "phi_003.csv", "phi_overlay.svg"]
    for k in range(4):
        lines = (out / f"phi_{k:03d}.csv").read_text().splitlines()
        assert lines[0] == "theta,value" and len(lines) == 11
    assert set(manifest_files(out)) == set(names) - {"manifest.json"}


def test_boundary_n0_is_constant(tmp_path):
    code, out = run(tmp_path, "b0", "boundary", "--grid-n", "16", "--n-max", "0", "--alpha", "5")
    assert code == 0
    data = np.loadtxt(out / "phi_000.csv", delimiter=",", skiprows=1)
    assert np.all(data[:, 1] == 5.0)


def test_csv_roundtrip_is_exact(tmp_path):
    v = np.random.default_rng(0).random(37)
    write_graph_csv(tmp_path / "g.csv", GraphSample(v, 1.0, offset=0.5))
    back = read_graph_csv(tmp_path / "g.csv")
    assert np.array_equal(back.values, v)
    assert back.offset == 0.5


def test_attractor_subthreshold_and_thinness(tmp_path):
    code, out = run(tmp_path, "a15", "attractor", "--alpha", "1.5", "--grid-n", "1000", "--n-max", "400")
    assert code == 0
    rep = json.loads((out / "attractor.json").read_text())
    assert rep["median_phi_over_L"] < 1e-6
    m = {}
    for alpha in ("5", "32"):
        code, out = run(tmp_path, f"a{alpha}", "attractor", "--alpha", alpha, "--grid-n", "20000")
        assert code == 0
        rep = json.loads((out / "attractor.json").read_text())
        assert rep["lyapunov"]["value"] < 0
        m[alpha] = rep
    # the larger parameter leaves a thinner set near the 0-line
    assert m["32"]["median_phi_over_L"] > m["5"]["median_phi_over_L"]
    assert m["32"]["fraction_below_tenth_L"] < m["5"]["fraction_below_tenth_L"]


def test_attractor_not_converged_keeps_output(tmp_path):
    code, out = run(tmp_path, "nc", "attractor", "--alpha", "5", "--grid-n", "100", "--n-max", "2")
    assert code == 4
    assert (out / "phi_plus.csv").exists() and (out / "manifest.json").exists()
    rep = json.loads((out / "attractor.json").read_text())
    assert rep["convergence"]["converged"] is False and rep["lyapunov"] is None


def test_check_exit_codes(tmp_path):
    code, _ = run(tmp_path, "c3", "check", "--alpha", "3")
    assert code == 1
    code, _ = run(tmp_path, "cm", "check", "--omega", "")
    assert code == 2
    code, out = run(tmp_path, "cp", "check", "--alpha", "32", "--split", "4,8",
                    "--set", "a=8", "--set", "b=omega^3", "--set", "m=5")
    rep = json.loads((out / "check.json").read_text())
    assert rep["per_condition"]["reference_domination"]["passed"] is True
    assert rep["overrides"]["b"] == pytest.approx(GOLDEN**3)


def test_config_errors(tmp_path):
    assert main(["boundary", "--set", "nonsense=1", "--out", str(tmp_path / "x")]) == 2
    assert main(["boundary", "--set", "grid_n=abc", "--out", str(tmp_path / "x")]) == 2
    assert main(["boundary", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "x")]) == 2
    assert main(["boundary", "--split", "4", "--out", str(tmp_path / "x")]) == 2
    assert main(["boundary", "--omega", "1.5", "--out", str(tmp_path / "x")]) == 2


def test_config_file_and_override_order(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nalpha = 7\ngrid_n=12\n\nn_max=1\n")
    code, out = run(tmp_path, "cf", "boundary", "--config", str(cfg_file), "--grid-n", "8")
    assert code == 0
    assert len((out / "phi_001.csv").read_text().splitlines()) == 9
    assert np.loadtxt(out / "phi_000.csv", delimiter=",", skiprows=1)[0, 1] == 7.0


def test_counterexample_golden_is_numeric_error(tmp_path, capsys):
    code, _ = run(tmp_path, "ceg", "counterexample", "--set", "coeff_rule=golden")
    assert code == 3
    assert "diverges" in capsys.readouterr().err


def test_counterexample_outputs(tmp_path):
    code, out = run(tmp_path, "ce", "counterexample", "--grid-n", "2001", "--set", "n_iter=100", "--smooth")
    assert code == 0
    for name in ("g.csv", "claim1.json", "claim2.json", "phi_plus_ce.csv", "variant.json"):
        assert (out / name).exists()
    c2 = json.loads((out / "claim2.json").read_text())
    assert c2["certificate"]["isolated"] is True


def test_probe_empty_report(tmp_path):
    code, out = run(tmp_path, "p0", "probe", "--alpha", "1.5", "--grid-n", "5000", "--n-max", "400")
    assert code == 0
    rep = json.loads((out / "probe.json").read_text())
    assert rep["samples"] == 0 and rep["hit_fraction"] is None


@pytest.mark.parametrize("args", [
    ["boundary", "--grid-n", "500", "--n-max", "4", "--svg"],
    ["attractor", "--alpha", "5", "--grid-n", "5000"],
    ["probe", "--alpha", "32", "--grid-n", "5000", "--set", "n_samples=10"],
    ["counterexample", "--grid-n", "1001", "--set", "n_iter=60"],
])
def test_determinism(tmp_path, args):
    code1, out1 = run(tmp_path, "r1", *args)
    code2, out2 = run(tmp_path, "r2", *args)
    assert code1 == code2
    assert manifest_files(out1) == manifest_files(out2)


def test_config_hash_ignores_out_only():
    a, b = RunConfig(out="x"), RunConfig(out="y")
    assert a.hash() == b.hash()
    apply_pairs(b, ["seed=1"])
    assert a.hash() != b.hash()


def test_config_value_parsing():
    cfg = apply_pairs(RunConfig(), ["omega=cf:1,4,9,16", "split=4,8", "l1_tol=none", "svg=yes", "grid_n=1e4"])
    validate(cfg)
    assert cfg.resolved_split() == (4.0, 8.0)
    assert cfg.l1_tol is None and cfg.svg is True and cfg.grid_n == 10_000
    assert 0 < cfg.resolved_omega() < 1
    with pytest.raises(ConfigError):
        apply_pairs(RunConfig(), ["svg=maybe"])


def test_parse_length():
    assert parse_length("omega^3", GOLDEN) == pytest.approx(GOLDEN**3)
    assert parse_length("0.25", GOLDEN) == 0.25
    assert parse_length(None, GOLDEN) is None
    with pytest.raises(ConfigError):
        parse_length("omega^x", GOLDEN)


def test_every_subcommand_has_common_flags():
    parser = build_parser()
    for cmd in ("boundary", "attractor", "check", "counterexample", "probe"):
        ns = parser.parse_args([cmd, "--seed", "1", "--grid-n", "2", "--n-max", "1", "--tol", "1e-3", "--out", "o"])
        assert (ns.seed, ns.grid_n, ns.n_max, ns.tol, ns.out) == (1, 2, 1, 1e-3, "o")
