import csv
import json

import pytest

from lanehouse.cli import ConfigError, load_run_config, main
from lanehouse.synthetic import write_csv

from oracles import median_lower

FAST_MODELS = [
    {"label": "MLR", "family": "mlr"},
    {"label": "RR", "family": "ridge", "grid": {"lambda": [0.1, 10.0]}},
    {"label": "LR", "family": "lasso", "grid": {"lambda": [1.0, 100.0]}},
    {"label": "DT", "family": "tree", "params": {"max_depth": 5, "min_samples_leaf": 7, "min_samples_split": 2},
     "grid": {"max_depth": [3, 5]}},
    {"label": "RF", "family": "forest",
     "params": {"max_depth": 6, "min_samples_leaf": 5, "min_samples_split": 10, "n_estimators": 8},
     "grid": {"feature_fraction": [0.5]}},
]


@pytest.fixture
def workdir(tmp_path):
    write_csv(tmp_path / "data.csv", 150, seed=4, n_missing=3, n_duplicates=4)
    cfg = {"dataset": "data.csv", "output_dir": "out", "seed": 7, "models": FAST_MODELS,
           "grid_search": {"folds": 3}, "llm": {"k": [0, 1, 5, 10]}}
    (tmp_path / "config.json").write_text(json.dumps(cfg))
    return tmp_path


def run(workdir, *args):
    return main([args[0], "--config", str(workdir / "config.json"), *args[1:]])


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_preprocess_counts(workdir, capsys):
    assert run(workdir, "preprocess") == 0
    assert "rows: 157 -> 154 -> 150; design matrix 150 x 22" in capsys.readouterr().out
    summary = json.loads((workdir / "out" / "summary.json").read_text())
    assert summary["stage_counts"] == {"loaded": 157, "after_drop_missing": 154, "after_dedup": 150}
    assert (summary["n"], summary["p"]) == (150, 22)
    for name in ("design_matrix.csv", "records.jsonl", "schema.json", "plotdata_district_counts.csv",
                 "plotdata_district_rent.csv", "plotdata_district_area.csv", "plotdata_district_amenities.csv"):
        assert (workdir / "out" / name).is_file()
    with (workdir / "out" / "plotdata_district_counts.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert sum(int(r["listings"]) for r in rows) == 150


def test_clean_input_counts_unchanged(tmp_path):
    write_csv(tmp_path / "clean.csv", 40, seed=1)
    assert main(["preprocess", "--dataset", str(tmp_path / "clean.csv"), "--out", str(tmp_path / "o")]) == 0
    counts = json.loads((tmp_path / "o" / "summary.json").read_text())["stage_counts"]
    assert counts == {"loaded": 40, "after_drop_missing": 40, "after_dedup": 40}


def test_missing_schema_fails_fast(workdir, capsys):
    code = run(workdir, "preprocess", "--schema", str(workdir / "missing.json"))
    assert code == 2
    assert "schema file not found" in capsys.readouterr().err
    assert not (workdir / "out").exists()


def test_missing_dataset_and_config(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "none.json")
    assert main(["preprocess", "--dataset", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 2


def test_compare_before_preprocess(workdir):
    assert run(workdir, "compare") == 2


def test_bad_cell_is_runtime_error(tmp_path, capsys):
    write_csv(tmp_path / "d.csv", 20, seed=1)
    text = (tmp_path / "d.csv").read_text().splitlines()
    fields = text[3].split(",")
    fields[2] = "three"
    text[3] = ",".join(fields)
    (tmp_path / "d.csv").write_text("\n".join(text) + "\n")
    assert main(["preprocess", "--dataset", str(tmp_path / "d.csv"), "--out", str(tmp_path / "o")]) == 1
    assert "row 2" in capsys.readouterr().err


def test_full_run_is_idempotent(workdir):
    out = workdir / "out"
    for cmd in ("preprocess", "compare", "llm", "report"):
        assert run(workdir, cmd) == 0
    first = snapshot(out)
    for cmd in ("preprocess", "compare", "llm", "report"):
        assert run(workdir, cmd) == 0
    assert snapshot(out) == first
    comparison = json.loads(first["comparison.json"])
    assert [r["label"] for r in comparison["rows"]] == ["MLR", "RR", "LR", "DT", "RF"]
    assert comparison["tuning"]["RR"]["best_params"]["lambda"] in (0.1, 10.0)
    assert comparison["tuning"]["RF"]["best_params"]["n_estimators"] == 8
    assert b"| | MSE | MAE | R Squared |" in first["comparison.md"]
    llm = json.loads(first["llm_report.json"])
    assert [r["k"] for r in llm["rows"]] == [0, 1, 5, 10]
    report = first["report.md"].decode()
    assert "| RF |" in report and "| LLM (10-shot) |" in report


def test_one_family_table(workdir):
    cfg = json.loads((workdir / "config.json").read_text())
    cfg["models"] = [{"label": "MLR", "family": "mlr"}]
    (workdir / "config.json").write_text(json.dumps(cfg))
    assert run(workdir, "preprocess") == 0
    assert run(workdir, "compare") == 0
    rows = json.loads((workdir / "out" / "comparison.json").read_text())["rows"]
    assert len(rows) == 1


def test_seed_flag_changes_split(workdir):
    assert run(workdir, "preprocess") == 0
    cfg = json.loads((workdir / "config.json").read_text())
    cfg["models"] = [{"label": "MLR", "family": "mlr"}]
    (workdir / "config.json").write_text(json.dumps(cfg))
    assert run(workdir, "compare") == 0
    a = (workdir / "out" / "comparison.json").read_bytes()
    assert run(workdir, "compare", "--seed", "8") == 0
    assert (workdir / "out" / "comparison.json").read_bytes() != a


def test_llm_k0_predicts_train_median(workdir, capsys):
    assert run(workdir, "preprocess") == 0
    assert run(workdir, "llm", "--mock", "--k", "0") == 0
    out = workdir / "out"
    entries = [json.loads(line) for line in (out / "runlog.jsonl").read_text().splitlines()]
    records = [json.loads(line) for line in (out / "records.jsonl").read_text().splitlines()]
    test_rows = {e["row"] for e in entries}
    train_rents = [r["target"] for r in records if r["row"] not in test_rows]
    assert len(entries) == 30
    assert {e["parsed"] for e in entries} == {median_lower(train_rents)}
    assert "LLM (0-shot)" in capsys.readouterr().out


def test_llm_live_without_key(workdir, monkeypatch):
    monkeypatch.delenv("LANEHOUSE_LLM_API_KEY", raising=False)
    assert run(workdir, "preprocess") == 0
    assert run(workdir, "llm", "--live", "--k", "0") == 2


def test_bad_k_list(workdir):
    with pytest.raises(SystemExit):
        run(workdir, "llm", "--k", "1,x")


def test_report_needs_inputs(workdir):
    assert run(workdir, "report") == 2


def test_flags_override_config(workdir):
    cfg = load_run_config(workdir / "config.json", {"seed": 11, "llm": {"workers": 3}})
    assert cfg.seed == 11 and cfg.split.seed == 11
    assert cfg.llm["workers"] == 3 and cfg.llm["k"] == [0, 1, 5, 10]
    assert cfg.dataset == workdir / "data.csv"
    assert cfg.output_dir == workdir / "out"
