import json
import math

import numpy as np
import pytest

from orbsde.errors import InvalidArgumentError, ParseError
from orbsde.harness.cli import main
from orbsde.harness.config import ConfigError, catalog, load_config
from orbsde.harness.convergence import (ConvergenceTable, alpha, run_convergence,
                                        run_perturbation)
from orbsde.harness.export import ExportError, export, format_float, load_json, read_csv
from orbsde.harness.expr import (BinOp, CoefficientExpr, Num, Var, evaluate, parse_expression,
                                 variables_of)

# parser -------------------------------------------------------------------


def test_parse_examples():
    assert parse_expression("0") == Num(0.0)
    tree = parse_expression("max(x1 - 1, 0)")
    assert tree.name == "max" and tree.args[0] == BinOp("-", Var("x1"), Num(1.0))
    assert evaluate(tree, {"x1": 3.0}) == 2.0
    assert evaluate(parse_expression("y2 - y1 + 0.5*z1"), {"y1": 1, "y2": 4, "z1": 2}) == 4


def test_declared_variables_only():
    parse_expression("x1 + y2", {"x1", "y2"})
    with pytest.raises(ParseError, match="unknown identifier 'y3'"):
        parse_expression("x1 + y3", {"x1", "y2"})


def test_vectorised_evaluation():
    e = CoefficientExpr("clamp(x1, 0, 1) + y2 * z1", {"x1", "y1", "y2", "z1"})
    x = np.array([[-1.0], [0.5], [3.0]])
    y = np.array([[0, 1], [0, 2], [0, 3]], float)
    z = np.array([[1.0], [1.0], [-1.0]])
    assert e(x, y, z).tolist() == [1.0, 2.5, -2.0]
    assert variables_of(e.tree) == {"x1", "y2", "z1"}


def test_evaluation_total_on_finite_inputs():
    out = evaluate(parse_expression("exp(x1) / x2"), {"x1": np.array([1000.0]),
                                                       "x2": np.array([0.0])})
    assert math.isinf(out[0])


def test_parse_error_location_text():
    with pytest.raises(ParseError) as info:
        parse_expression("x1 +\n  @")
    assert str(info.value).endswith("(line 2, column 3)")


# config -------------------------------------------------------------------

BASE = {
    "dims": {"m": 1, "q": 1, "d": 2}, "T": 1.0, "x0": [0.0],
    "b": [0], "sigma": [[1]], "f": ["x1", "-x1"], "g": [0, 0], "c": [[0, 0.1], [0.1, 0]],
    "lipschitz": {"y": 0.5, "z": 0.25}, "grid": {"n": 4},
    "scenario": {"backend": "lattice"},
}


def test_catalog_configs_load():
    names = set(catalog())
    assert {"martingale", "linear_decoupled", "switching_2mode", "energy_toy_3mode",
            "invalid_costs_d3"} <= names
    for path in catalog().values():
        load_config(path)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="Additional properties"):
        load_config({**BASE, "colour": "blue"})
    with pytest.raises(ConfigError, match="grid"):
        load_config({**BASE, "grid": {"n": 4, "steps": 3}})


def test_dimension_mismatch():
    with pytest.raises(ConfigError, match="f must have 2"):
        load_config({**BASE, "f": ["x1"]})
    with pytest.raises(ConfigError, match=r"c\[1\]"):
        load_config({**BASE, "c": [[0, 1], [1]]})


def test_expression_errors_name_the_field():
    with pytest.raises(ParseError, match=r"f\[1\]: unknown identifier 'y3'"):
        load_config({**BASE, "f": ["x1", "y3"]})
    with pytest.raises(ParseError, match=r"g\[0\]"):
        load_config({**BASE, "g": ["y1", 0]})


def test_defaults_and_overrides():
    cfg = load_config(BASE)
    assert cfg.R == 4.0 and cfg.weights_kind == "rademacher"
    assert cfg.solver["tol"] == 1e-12
    cfg2 = cfg.with_overrides(grid={"n": 6}, scenario={"seed": 3})
    assert cfg2.n == 6 and cfg2.seed == 3 and cfg.n == 4
    reg = load_config({**BASE, "scenario": {"backend": "regression", "n_paths": 10}})
    assert reg.weights_kind == "truncated_gaussian"
    bad = load_config({**BASE, "weights": {"kind": "truncated_gaussian"}})
    with pytest.raises(ConfigError):
        bad.weights(bad.scenario())


def test_json_text_and_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(BASE))
    assert load_config(str(p)).problem.d == 2
    assert load_config(json.dumps(BASE)).problem.d == 2
    with pytest.raises(ConfigError, match="line 1"):
        load_config("{not json")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))


# export -------------------------------------------------------------------

def test_float_formats(tmp_path):
    assert format_float(1.0) == "1.0000000000000000e+00"
    assert float(format_float(0.1)) == 0.1
    assert format_float(None) == "NA" and format_float(float("nan")) == "NA"
    export({"a": 1.0, "b": 0.1, "c": [2.0, 1e300]}, tmp_path / "x.json")
    text = (tmp_path / "x.json").read_text()
    assert '"a": 1,' in text and '"b": 0.1' in text
    assert load_json(tmp_path / "x.json") == {"a": 1.0, "b": 0.1, "c": [2.0, 1e300]}


def test_empty_table_is_header_only(tmp_path):
    export(ConvergenceTable(2, 1.0, "finest"), tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == \
        "n,h,hR,kappa,y0_1,y0_2,error,stderr,alpha,seconds\n"


def test_solution_summary_round_trip(tmp_path):
    cfg = load_config(BASE)
    lat = cfg.scenario()
    from orbsde.scheme import solve
    sol = solve(cfg.problem, lat, cfg.weights(lat), cfg.backend(lat))
    export(sol, tmp_path / "s.json")
    back = load_json(tmp_path / "s.json")
    assert back == json.loads(json.dumps(sol.summary()))
    export(sol, tmp_path / "s.csv")
    header, rows = read_csv(tmp_path / "s.csv")
    assert header[:4] == ["i", "t", "reflection", "y_mean_1"] and len(rows) == 5
    assert float(rows[0][3]) == sol.y0[0]


def test_export_errors_carry_path(tmp_path):
    with pytest.raises(ExportError, match="missing"):
        export({"a": 1}, tmp_path / "missing" / "x.json")
    with pytest.raises(ExportError, match="format"):
        export({"a": 1}, tmp_path / "x.txt")


# convergence --------------------------------------------------------------

def test_martingale_errors_vanish_and_slope_na():
    cfg = load_config(catalog()["martingale"])
    table = run_convergence(cfg, [2, 4, 8], gamma=0.5, reference="closed_form")
    assert all(r.error <= 1e-14 for r in table.rows)
    assert table.slope is None
    rows = table.csv_rows()
    assert all(r[-4] is not None for r in rows)


def test_alpha_column_and_sorting():
    cfg = load_config(catalog()["martingale"])
    table = run_convergence(cfg, [8, 2, 4], reference="finest")
    assert [r.n for r in table.rows] == [2, 4, 8]
    assert table.rows[-1].reference and table.rows[-1].error is None
    for r in table.rows:
        assert r.alpha == math.log(2 * 1.0 / r.h) == alpha(r.h, 1.0)


def test_same_seed_is_bitwise_identical(monkeypatch):
    cfg = load_config(catalog()["linear_decoupled"]).with_overrides(
        scenario={"n_paths": 2000})
    a = run_convergence(cfg, [4, 8, 16], reference="closed_form")
    monkeypatch.setenv("ORBSDE_THREADS", "3")
    b = run_convergence(cfg, [4, 8, 16], reference="closed_form")
    strip = lambda t: [r[:-1] for r in t.csv_rows()]  # noqa: E731 (runtime differs)
    assert strip(a) == strip(b) and a.slope == b.slope


def test_failed_rows_are_marked():
    cfg = load_config(catalog()["switching_2mode"]).with_overrides(
        solver={"max_iter": 1, "tol": 1e-300})
    table = run_convergence(cfg, [2, 4], reference="finest")
    assert all(r.failed and "Picard" in r.failed for r in table.rows)
    assert table.slope is None


def test_bad_inputs():
    cfg = load_config(catalog()["switching_2mode"])
    with pytest.raises(InvalidArgumentError):
        run_convergence(cfg, [4, 4])
    with pytest.raises(InvalidArgumentError):
        run_convergence(cfg, [2, 4], reference="closed_form")
    with pytest.raises(InvalidArgumentError):
        run_perturbation(cfg, [0.0])


# cli ----------------------------------------------------------------------

def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_validate_invalid_costs(capsys):
    code, out, _ = run(capsys, "validate", "invalid_costs_d3")
    assert code == 1
    report = json.loads(out)
    triples = {(v["i"], v["j"], v["l"]) for v in report["problem"]["violations"]
               if v["kind"] == "structure"}
    assert triples == {(1, 2, 3)}


def test_cli_validate_ok(capsys):
    code, out, _ = run(capsys, "validate", "switching_2mode")
    assert code == 0 and json.loads(out)["weights"]["passed"]


def test_cli_solve_martingale(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "martingale", "--csv", str(tmp_path / "a.csv"))
    assert code == 0 and json.loads(out)["y0"] == [1, 1]
    assert (tmp_path / "a.csv").exists()


def test_cli_converge_header(capsys):
    code, out, err = run(capsys, "converge", "martingale", "--n", "2,4,8", "--gamma", "0.5",
                         "--reference", "finest")
    assert code == 0
    assert out.splitlines()[0] == "n,h,hR,kappa,y0_1,y0_2,error,stderr,alpha,seconds"
    assert "slope: NA" in err


def test_cli_oracle_strategy_perturb(capsys, tmp_path):
    code, out, _ = run(capsys, "oracle", "switching_2mode", "--start", "0,2", "--sample", "50")
    assert code == 0 and json.loads(out)["passed"]
    code, out, _ = run(capsys, "strategy", "switching_2mode", "--start", "2,1")
    assert code == 0 and out.startswith("time,node,mode_in,mode_out\n")
    out_file = tmp_path / "p.csv"
    code, _, _ = run(capsys, "perturb", "switching_2mode", "--zeta", "0.01,0.02",
                     "--out", str(out_file))
    assert code == 0 and len(out_file.read_text().splitlines()) == 3


def test_cli_seed_override(capsys):
    cfg = ["solve", "energy_toy_3mode"]
    a = json.loads(run(capsys, "--seed", "1", *cfg)[1])["y0"]
    b = json.loads(run(capsys, "--seed", "2", *cfg)[1])["y0"]
    c = json.loads(run(capsys, *cfg)[1])["y0"]
    assert a == c and a != b


def test_cli_exit_codes(capsys, tmp_path):
    assert run(capsys)[0] == 64
    assert run(capsys, "frobnicate", "martingale")[0] == 64
    assert run(capsys, "solve", "no_such_config")[0] == 64
    assert run(capsys, "strategy", "martingale")[0] == 64
    assert run(capsys, "oracle", "energy_toy_3mode")[0] == 64
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**BASE, "extra": 1}))
    assert run(capsys, "solve", str(bad))[0] == 1
    big = tmp_path / "big.json"
    big.write_text(json.dumps({**BASE, "grid": {"n": 40}}))
    code, _, err = run(capsys, "solve", str(big))
    assert code == 2 and "budget" in err
    assert run(capsys, "--help")[0] == 0


def test_z_error_aggregate(capsys):
    cfg = load_config(catalog()["linear_decoupled"]).with_overrides(
        scenario={"n_paths": 4000})
    table = run_convergence(cfg, [2, 4, 8], reference="finest", z_error=True)
    assert table.csv_header()[-1] == "z_error"
    zs = [r.z_error for r in table.rows]
    assert zs[-1] is None and all(z > 0 for z in zs[:-1])
    assert zs[1] < zs[0]
    assert "z_slope" in table.to_dict()
    with pytest.raises(InvalidArgumentError):
        run_convergence(cfg, [2, 4], reference="closed_form", z_error=True)
    with pytest.raises(InvalidArgumentError):
        run_convergence(cfg, [3, 6], reference="finest", z_error=True)
    code, out, err = run(capsys, "converge", "martingale", "--n", "2,4", "--z-error")
    assert code == 2
