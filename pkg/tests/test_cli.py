import csv
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import tomli_w

from finsler_myers import __version__
from finsler_myers.cli import main
from finsler_myers.config import ConfigError, ExperimentConfig

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, data, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(tomli_w.dumps(data), encoding="utf-8")
    return str(path)


def run(tmp_path, command, data, capsys=None):
    cfg = write_config(tmp_path, data)
    out = tmp_path / "out"
    code = main([command, cfg, "--out-dir", str(out)])
    return code, out


def read_csv(path):
    """Rows of a CSV report and its ``# key=value`` footer."""
    body, footer = [], {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            footer[k] = v
        else:
            body.append(line)
    return list(csv.reader(body)), footer


SPHERE = {"name": "sphere", "n": 2, "a": 1.0}
EUCLID = {"name": "euclidean", "n": 2}


# ---------------------------------------------------------------- configuration


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = ExperimentConfig.load(path)
    text = cfg.to_toml()
    again = ExperimentConfig.from_toml(text)
    assert again.to_toml() == text
    assert again.digest() == cfg.digest()
    cfg.build_metric()


def test_digest_ignores_output_dir_and_key_order():
    a = ExperimentConfig.from_dict({"metric": SPHERE, "run": {"L": 2.0, "h": 1e-3}, "output": {"dir": "x"}})
    b = ExperimentConfig.from_dict({"output": {"dir": "y"}, "run": {"h": 1e-3, "L": 2.0},
                                    "metric": {"a": 1.0, "n": 2, "name": "sphere"}})
    assert a.digest() == b.digest()
    c = ExperimentConfig.from_dict({"metric": SPHERE, "run": {"L": 2.5, "h": 1e-3}})
    assert c.digest() != a.digest()


@pytest.mark.parametrize(
    "data",
    [
        {"run": {"L": 1.0}},
        {"metric": {"name": "torus"}},
        {"metric": SPHERE, "run": {"h": 0.0}},
        {"metric": SPHERE, "run": {"h": 0.05}},
        {"metric": SPHERE, "run": {"L": -1.0}},
        {"metric": SPHERE, "run": {"x0": [0.0, 0.0, 0.0]}},
        {"metric": SPHERE, "run": {"chart": 5}},
        {"metric": SPHERE, "run": {"directions": 0}},
        {"metric": SPHERE, "runs": {}},
        {"metric": SPHERE, "run": {"speed": 1}},
        {"metric": SPHERE, "bounds": {"epsilon": 0}},
        {"metric": SPHERE, "bounds": {"n": 3}},
        {"metric": SPHERE, "sweep": {"r_min": 2.0, "r_max": 1.0}},
        {"metric": SPHERE, "theorem_b": {"b": 1.0}},
        {"metric": SPHERE, "numerics": {"speed_error": -1.0}},
        {"metric": SPHERE, "numerics": {"bogus": 1.0}},
        {"metric": SPHERE, "output": {"seed": "zero"}},
    ],
)
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_config_syntax_error():
    with pytest.raises(ConfigError, match="TOML"):
        ExperimentConfig.from_toml("[metric\nname = 1")


def test_numerics_overrides_reach_policy():
    cfg = ExperimentConfig.from_dict({"metric": SPHERE, "run": {"h": 2e-3}, "numerics": {"speed_error": 1e-4}})
    pol = cfg.policy()
    assert pol.h == 2e-3 and pol.speed_error == 1e-4


# ---------------------------------------------------------------- geodesic


def test_geodesic_sphere_closes(tmp_path):
    code, out = run(tmp_path, "geodesic", {"metric": SPHERE, "run": {"L": 2 * math.pi, "y0": [1.0, 0.0]}})
    assert code == 0
    rows, footer = read_csv(out / "geodesic.csv")
    assert rows[0] == ["t", "chart", "x1", "x2", "T1", "T2"]
    first, last = np.array(rows[1], float), np.array(rows[-1], float)
    assert last[0] == pytest.approx(2 * math.pi)
    assert last[1] == first[1] == 0
    assert np.max(np.abs(last[2:4] - first[2:4])) < 1e-4
    assert {"chart"} <= {r[1] for r in rows[:1]} and {"0", "1"} <= {r[1] for r in rows[1:]}
    assert footer["version"] == f"finsler_myers {__version__}"
    assert len(footer["config_sha256"]) == 64


def test_geodesic_euclidean_straight(tmp_path):
    code, out = run(tmp_path, "geodesic", {"metric": EUCLID, "run": {"L": 2.0, "y0": [3.0, 4.0]}})
    assert code == 0
    rows, _ = read_csv(out / "geodesic.csv")
    data = np.array(rows[1:], float)
    assert np.max(np.abs(data[:, 2:4] - np.outer(data[:, 0], [0.6, 0.8]))) < 1e-12


def test_zero_step_exits_2(tmp_path, capsys):
    code, out = run(tmp_path, "geodesic", {"metric": SPHERE, "run": {"h": 0.0}})
    assert code == 2 and not out.exists()
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    doc = json.loads(err[0])
    assert doc["exit"] == 2 and doc["error"] == "ConfigError" and "h" in doc["message"]


def test_atlas_escape_exits_4(tmp_path, capsys):
    data = {"metric": {"name": "warped_surface", "phi": "sin"}, "run": {"x0": [1.5, 0.0], "y0": [1.0, 0.0], "L": 3.0}}
    code, _ = run(tmp_path, "geodesic", data)
    assert code == 4
    assert json.loads(capsys.readouterr().err)["error"] == "AtlasCoverageError"


def test_speed_drift_exits_3(tmp_path, capsys):
    data = {"metric": {"name": "sphere", "n": 2, "a": 400.0}, "run": {"x0": [0.01, 0.0], "y0": [0.0, 1.0],
                                                                        "L": 1.0, "h": 0.01}}
    code, _ = run(tmp_path, "geodesic", data)
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] == "IntegrationAccuracyError"


# ---------------------------------------------------------------- conjugate


@pytest.mark.parametrize("a,L,expected", [(1.0, 3.5, math.pi), (4.0, 1.8, math.pi / 2)])
def test_conjugate_sphere(tmp_path, a, L, expected):
    code, out = run(tmp_path, "conjugate", {"metric": {"name": "sphere", "n": 2, "a": a}, "run": {"L": L}})
    assert code == 0
    doc = json.loads((out / "conjugate.json").read_text())
    assert doc["t_c"] == pytest.approx(expected, abs=1e-4)
    assert doc["bracket"][1] - doc["bracket"][0] < 1e-6
    assert doc["version"] == __version__


def test_conjugate_euclidean_none(tmp_path):
    code, out = run(tmp_path, "conjugate", {"metric": EUCLID, "run": {"L": 50.0, "h": 5e-3}})
    assert code == 0
    assert json.loads((out / "conjugate.json").read_text())["t_c"] == "none"


# ---------------------------------------------------------------- index sweep


def test_index_sweep_sphere_sign_change(tmp_path):
    code, out = run(tmp_path, "index-sweep", {"metric": SPHERE, "sweep": {"r_min": 2.5, "r_max": 3.8, "r_step": 0.05},
                                              "bounds": {"a": 1.05, "Lambda": 0.5}})
    assert code == 0
    rows, footer = read_csv(out / "index_sweep.csv")
    assert rows[0][:5] == ["r", "sum_I", "ricci_formula", "discrepancy", "ric_integral"]
    data = np.array(rows[1:], float)
    r, s = data[:, 0], data[:, 1]
    flip = int(np.flatnonzero(np.sign(s[:-1]) != np.sign(s[1:]))[0])
    assert r[flip] <= math.pi <= r[flip + 1] + 1e-12 and r[flip + 1] - r[flip] <= 0.05 + 1e-12
    assert np.allclose(s, (math.pi**2 - r**2) / (2 * r), atol=1e-5)
    assert float(footer["max_discrepancy"]) < 1e-6
    assert np.max(data[:, 3]) == float(footer["max_discrepancy"])


def test_index_sweep_euclidean_positive(tmp_path):
    code, out = run(tmp_path, "index-sweep", {"metric": {"name": "euclidean", "n": 3}, "sweep": {"r_min": 0.5, "r_max": 3.0}})
    assert code == 0
    rows, footer = read_csv(out / "index_sweep.csv")
    assert rows[0][5:7] == ["I_1", "I_2"]
    assert all(float(row[1]) > 0 for row in rows[1:])
    assert float(footer["max_discrepancy"]) < 1e-6


# ---------------------------------------------------------------- myers


def test_myers_sphere_all_confirmed(tmp_path):
    code = main(["myers", str(CONFIGS / "sphere_myers.toml"), "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "myers.json").read_text())
    assert len(doc["directions"]) == 64
    assert {d["verdict"] for d in doc["directions"]} == {"confirmed"}
    rows, footer = read_csv(tmp_path / "myers.csv")
    assert len(rows) == 65
    assert json.loads(footer["verdicts"]) == {"confirmed": 64}
    assert footer["config_sha256"] == doc["config_sha256"]


def test_myers_euclidean_vacuous(tmp_path):
    data = {"metric": EUCLID, "run": {"directions": 4, "h": 5e-3}, "bounds": {"a": 1.0, "Lambda": 0.5}}
    code, out = run(tmp_path, "myers", data)
    assert code == 0
    doc = json.loads((out / "myers.json").read_text())
    assert {d["verdict"] for d in doc["directions"]} == {"vacuous"}
    assert {d["t_c"] for d in doc["directions"]} == {"none"}


def test_myers_eps_plus_infeasible(tmp_path):
    code = main(["myers", str(CONFIGS / "randers_myers.toml"), "--out-dir", str(tmp_path)])
    assert code == 0
    _, footer = read_csv(tmp_path / "myers.csv")
    assert json.loads(footer["verdicts"]) == {"infeasible-as-stated": 8}


def test_myers_single_direction_from_y0(tmp_path):
    data = {"metric": SPHERE, "run": {"directions": 1, "y0": [0.0, 3.0], "h": 5e-3},
            "bounds": {"a": 1.05, "Lambda": 0.5}, "output": {"include_samples": True}}
    code, out = run(tmp_path, "myers", data)
    assert code == 0
    d = json.loads((out / "myers.json").read_text())["directions"][0]
    assert d["y0"] == [0.0, 0.5]
    assert len(d["samples"]["t"]) == len(d["samples"]["ric"]) > 100


# ---------------------------------------------------------------- theorem B


def test_theorem_b_sphere(tmp_path):
    code = main(["theorem-b", str(CONFIGS / "sphere_theorem_b.toml"), "--out-dir", str(tmp_path)])
    assert code == 0
    rows, footer = read_csv(tmp_path / "theorem_b_summary.csv")
    assert rows[0] == ["direction", "verdict", "r_hit", "sum_at_hit", "t_c", "agrees"]
    assert rows[1][1] == "conjugate" and float(rows[1][2]) <= 30 and rows[1][5] == "true"
    assert float(rows[1][4]) == pytest.approx(math.pi, abs=1e-4)
    detail, _ = read_csv(tmp_path / "theorem_b.csv")
    assert detail[0] == ["direction", "r", "trial_sum", "ric_integral"] and len(detail) > 10
    assert "config_sha256" in footer


@pytest.mark.parametrize("metric,x0", [(EUCLID, [0.0, 0.0]), ({"name": "warped_surface", "phi": "cosh"}, [0.2, 0.0])])
def test_theorem_b_inconclusive(tmp_path, metric, x0):
    data = {"metric": metric, "run": {"x0": x0, "y0": [1.0, 0.0], "directions": 1, "h": 1e-2},
            "theorem_b": {"b": 2.0, "r_max": 100.0, "r_step": 2.0}}
    code, out = run(tmp_path, "theorem-b", data)
    assert code == 0
    rows, _ = read_csv(out / "theorem_b_summary.csv")
    assert rows[1][1] == "inconclusive" and rows[1][2] == ""


# ---------------------------------------------------------------- bounds


def test_bounds_table(tmp_path, capsys):
    code = main(["bounds", str(CONFIGS / "bounds.toml"), "--out-dir", str(tmp_path)])
    assert code == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == "bound,value"
    rows, footer = read_csv(tmp_path / "bounds.csv")
    table = {k: float(v) for k, v in rows[1:]}
    assert round(table["theoremA_eps_minus"], 4) == 4.2969
    assert round(table["theoremA_eps_plus"], 4) == 2.2969
    assert round(table["wu"], 4) == 4.1416
    assert table["classical"] == math.pi
    assert footer["Lambda"] == "1.0" and footer["epsilon"] == "-1"


def test_lf_utf8_and_seed_override(tmp_path):
    cfg = write_config(tmp_path, {"metric": EUCLID, "bounds": {"a": 2.0}})
    assert main(["bounds", cfg, "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["bounds", cfg, "--out-dir", str(tmp_path / "b"), "--seed", "5"]) == 0
    raw_a = (tmp_path / "a" / "bounds.csv").read_bytes()
    raw_b = (tmp_path / "b" / "bounds.csv").read_bytes()
    assert b"\r" not in raw_a
    raw_a.decode("utf-8")
    assert raw_a != raw_b  # the seed is part of the recorded configuration


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "finsler_myers", "--version"], capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and __version__ in proc.stdout
