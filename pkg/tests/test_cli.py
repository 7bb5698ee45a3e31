import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hierbeam.cli import main
from hierbeam.codebook import CodebookTree, GainModel, Region, dump_codebook
from hierbeam.config import parse_config
from hierbeam.errors import ConfigError
from hierbeam.runs import ELASTIC_COLUMNS, STREAMING_COLUMNS

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return path


def _line_codebook():
    tree = CodebookTree([-1, 0], [Region(0, 10, 0, 10), Region(0, 5, 0, 5)])
    return dump_codebook(tree, GainModel([1.0, 2.0], 1, 1))


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _run(tmp_path, verb, doc):
    doc = dict(doc, mode=verb, output=str(tmp_path / "out"))
    return main([verb, "--config", str(_write(tmp_path, doc))])


# analyses --------------------------------------------------------------------------

def test_pf_sweep_csv(tmp_path):
    assert _run(tmp_path, "analyze-pf", {"sweep": [0.2, 0.5, 0.8, 0.99], "sweep_scale": "pf-critical"}) == 0
    text = (tmp_path / "out" / "pf.csv").read_text()
    assert text.splitlines()[0] == ",".join(ELASTIC_COLUMNS)
    assert "\r" not in text
    rows = _read_csv(tmp_path / "out" / "pf.csv")
    assert len(rows) == 40
    by_beam = {}
    for row in rows:
        by_beam.setdefault(row["beam"], []).append(float(row["normalized_throughput"]))
    for series in by_beam.values():
        assert all(x > 0 for x in series)
        assert all(a > b for a, b in zip(series, series[1:]))
    meta = json.loads((tmp_path / "out" / "pf.meta.json").read_text())
    assert meta["pf_critical_load_factor"] == pytest.approx(1 / 1.01)
    assert meta["load_factors"][-1] == pytest.approx(0.99 / 1.01)


def test_pf_output_is_deterministic(tmp_path):
    doc = {"sweep": [0.3, 0.6], "sweep_scale": "pf-critical"}
    assert _run(tmp_path, "analyze-pf", doc) == 0
    first = (tmp_path / "out" / "pf.csv").read_bytes()
    assert _run(tmp_path, "analyze-pf", doc) == 0
    assert (tmp_path / "out" / "pf.csv").read_bytes() == first


def test_pf_overload_rows_are_flagged(tmp_path):
    assert _run(tmp_path, "analyze-pf", {"sweep": [1.2], "sweep_scale": "pf-critical"}) == 0
    rows = _read_csv(tmp_path / "out" / "pf.csv")
    assert {r["flag"] for r in rows} == {"overload"}
    assert all(float(r["normalized_throughput"]) == 0 for r in rows)


def test_mt_sweep_marks_overload_past_saturation(tmp_path):
    assert _run(tmp_path, "analyze-mt", {"sweep": [0.5, 1.5], "sweep_scale": "mt-saturation"}) == 0
    rows = _read_csv(tmp_path / "out" / "mt.csv")
    low = [r for r in rows if float(r["load_factor"]) < 0.5]
    high = [r for r in rows if float(r["load_factor"]) > 0.5]
    assert all(r["flag"] == "" and r["method"] == "mt-exp-approx" for r in low)
    assert any(r["flag"] == "overload" for r in high)


def test_streaming_sweep(tmp_path):
    doc = {"sweep": [0.5, 4.0], "streaming": {"xi": 4, "s": [1, 1, 1, 1, 2, 2, 2, 2, 2, 2]}}
    assert _run(tmp_path, "analyze-streaming", doc) == 0
    rows = _read_csv(tmp_path / "out" / "streaming.csv")
    assert list(rows[0]) == STREAMING_COLUMNS
    p = np.array([float(r["blocking_probability"]) for r in rows]).reshape(2, 10)
    assert np.all(p[1] > p[0])


def test_simulate_csv_has_stderr(tmp_path):
    doc = {"codebook": str(_write(tmp_path, _line_codebook(), "cb.json")),
           "traffic": {"rho": [0.25, 0.25], "r": [1, 1]}, "sweep": [1.0],
           "sim": {"horizon_events": 200000, "seed": 3, "policy": "pf"}}
    assert _run(tmp_path, "simulate", doc) == 0
    rows = _read_csv(tmp_path / "out" / "sim_pf.csv")
    assert [r["method"] for r in rows] == ["simulation", "simulation"]
    for r in rows:
        assert abs(float(r["expected_n"]) - 0.5) <= 4 * float(r["expected_n_stderr"])


def test_seed_flag_changes_simulation(tmp_path):
    doc = {"sweep": [0.3], "sim": {"horizon_events": 50000, "seed": 1, "policy": "pf"},
           "mode": "simulate", "output": str(tmp_path / "out")}
    cfg = _write(tmp_path, doc)
    main(["simulate", "--config", str(cfg)])
    a = (tmp_path / "out" / "sim_pf.csv").read_text()
    main(["simulate", "--config", str(cfg), "--seed", "2"])
    assert (tmp_path / "out" / "sim_pf.csv").read_text() != a


def test_allocate_artifact_is_feasible(tmp_path):
    doc = {"alpha": 1, "population": {"counts": [1, 2, 0, 1, 3, 1, 0, 2, 1, 1]}}
    assert _run(tmp_path, "allocate", doc) == 0
    art = json.loads((tmp_path / "out" / "allocation.json").read_text())
    assert art["feasible"] and max(art["path_sums"]) <= 1 + 1e-12
    assert len(art["flow_beams"]) == 12


# errors ----------------------------------------------------------------------------

def test_unknown_key_is_rejected_with_line(tmp_path):
    text = '{\n  "mode": "analyze-pf",\n  "sweep": [0.5],\n  "sim": {"horizon": 10}\n}\n'
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 4 and "horizon" in str(exc.value)


def test_unknown_top_level_key_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, {"mode": "analyze-pf", "colour": "blue"})
    assert main(["analyze-pf", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err


def test_verb_must_match_mode(tmp_path, capsys):
    cfg = _write(tmp_path, {"mode": "analyze-pf"})
    assert main(["analyze-mt", "--config", str(cfg)]) == 2
    assert "does not match" in capsys.readouterr().err


def test_missing_config_is_config_error(tmp_path):
    assert main(["analyze-pf", "--config", str(tmp_path / "nope.json")]) == 2


def test_unstable_pf_point_absolute_scale_still_succeeds(tmp_path):
    # overload is reported in the table, not as a failure
    assert _run(tmp_path, "analyze-pf", {"sweep": [2.0]}) == 0


def test_model_error_exit_code(tmp_path):
    doc = {"codebook": str(_write(tmp_path, _line_codebook(), "cb.json")),
           "traffic": {"rho": [0.1, 0.1], "r": [1, 1]},
           "streaming": {"xi": 2}, "sweep": [1.0],
           "sim": {"horizon_events": 1000, "policy": "streaming", "flow_size_distribution": "exponential"}}
    assert _run(tmp_path, "simulate", doc) == 0
    # an empty population parses but has nothing to allocate
    assert _run(tmp_path, "allocate", {"alpha": 2, "population": {"counts": [0] * 10}}) == 3


def test_point_outside_cell_is_config_error(tmp_path):
    assert _run(tmp_path, "allocate", {"alpha": 1, "population": {"points": [[100, 100]]}}) == 2


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = _write(tmp_path, {"mode": "analyze-pf", "sweep": [0.5], "output": str(blocker / "sub")})
    assert main(["analyze-pf", "--config", str(cfg)]) == 4


def test_custom_codebook_errors_are_located(tmp_path):
    regs = [Region(0, 10, 0, 10), Region(0, 11, 0, 5)]
    cb = dump_codebook(CodebookTree([-1, 0], regs), GainModel([1.0, 2.0], 1, 1))
    doc = {"codebook": str(_write(tmp_path, cb, "cb.json")), "traffic": {"rho": [0.1, 0.1], "r": [1, 1]}}
    with pytest.raises(ConfigError, match="nested"):
        parse_config(json.dumps(dict(doc, mode="analyze-pf")), tmp_path)


# shipped configurations -------------------------------------------------------------

@pytest.mark.parametrize("name", ["pf_sweep", "mt_sweep", "streaming_sweep", "allocate_pf", "validate"])
def test_shipped_configs_parse(name):
    cfg = parse_config((CONFIGS / f"{name}.json").read_text(), CONFIGS)
    assert cfg.mode in name.replace("pf_sweep", "analyze-pf").replace("mt_sweep", "analyze-mt") \
        .replace("streaming_sweep", "analyze-streaming").replace("allocate_pf", "allocate")


def test_quick_validate_exits_zero(tmp_path):
    assert _run(tmp_path, "validate", {"validate": {"quick": True}}) == 0
    rows = _read_csv(tmp_path / "out" / "validate.csv")
    assert [int(r["criterion"]) for r in rows] == [1, 2, 3, 4, 6, 7, 8, 9, 10]


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, {"mode": "analyze-pf", "sweep": [0.5], "output": str(tmp_path / "o")})
    proc = subprocess.run([sys.executable, "-m", "hierbeam", "analyze-pf", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "pf.csv").exists()
