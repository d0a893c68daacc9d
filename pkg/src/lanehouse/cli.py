"""Command-line entry point: ``lanehouse {preprocess,compare,llm,report}``.

Every command reads one JSON run config (``--config``; the bundled default
is used when omitted) and writes into the output directory. Flags override
config keys. Outputs carry no timestamps, so reruns with identical inputs
produce identical files.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import ingest
from .evaluation import (
    ComparisonTable,
    EvaluationError,
    GridSpec,
    ModelConfig,
    SplitSpec,
    compare_models,
    comparison_markdown,
    format_sci,
    grid_search,
    split_indices,
)
from .ingest import DesignMatrix, FeatureSchema, HouseRecord, IngestError
from .llm import (
    AuthError,
    ChatCompletionsClient,
    FieldMap,
    LlmConfig,
    MockClient,
    compute_statistics,
    evaluate_llm_run,
    predict_llm,
)

log = logging.getLogger("lanehouse")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------- config


@dataclass
class RunConfig:
    dataset: Path | None
    schema_path: Path | None
    required: list[str] | None
    output_dir: Path
    seed: int
    split: SplitSpec
    folds: int
    scoring: str
    models: list[dict]
    llm: dict

    def schema(self) -> FeatureSchema:
        return ingest.load_schema(self.schema_path) if self.schema_path else ingest.default_schema()


def _default_config() -> dict:
    text = resources.files("lanehouse.data").joinpath("default_config.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_run_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Bundled defaults, then the config file, then ``overrides`` (CLI flags).

    Relative paths in a config file resolve against the file's directory.
    Missing dataset or schema files raise :class:`ConfigError`.
    """
    doc = _default_config()
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            doc = _merge(doc, json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base_dir = path.parent
    doc = _merge(doc, overrides or {})

    def resolve(value) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    dataset = resolve(doc.get("dataset"))
    schema_path = resolve(doc.get("schema"))
    if schema_path is not None and not schema_path.is_file():
        raise ConfigError(f"schema file not found: {schema_path}")
    if dataset is not None and not dataset.is_file():
        raise ConfigError(f"dataset not found: {dataset}")
    try:
        seed = int(doc["seed"])
        split = SplitSpec(float(doc["split"].get("test_fraction", 0.2)), seed,
                          bool(doc["split"].get("shuffled", True)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid seed/split settings: {exc}") from None
    models = doc.get("models") or []
    for m in models:
        if "label" not in m or "family" not in m:
            raise ConfigError(f"model entry needs label and family: {m}")
    return RunConfig(
        dataset=dataset,
        schema_path=schema_path,
        required=doc.get("required"),
        output_dir=resolve(doc.get("output_dir") or "lanehouse-out"),
        seed=seed,
        split=split,
        folds=int(doc.get("grid_search", {}).get("folds", 5)),
        scoring=str(doc.get("grid_search", {}).get("scoring", "mse")),
        models=models,
        llm=dict(doc.get("llm") or {}),
    )


# ------------------------------------------------------------ file helpers


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_design_matrix(path: Path, d: DesignMatrix, target: str) -> None:
    rows = [[int(rid)] + [float(v) for v in xr] + [float(yv)] for rid, xr, yv in zip(d.row_ids, d.x, d.y)]
    _write(path, _csv_text(["row_id", *d.feature_names, target], rows))


def read_design_matrix(path: Path) -> DesignMatrix:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(c) for c in line] for line in reader]
    arr = np.asarray(data, dtype=np.float64).reshape(len(data), len(header))
    return DesignMatrix(arr[:, 1:-1], arr[:, -1], tuple(header[1:-1]), arr[:, 0].astype(np.int64))


def read_records(path: Path) -> list[HouseRecord]:
    with path.open(encoding="utf-8") as fh:
        return [HouseRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


# ------------------------------------------------------------- preprocess


def region_aggregates(records: Sequence[HouseRecord], schema: FeatureSchema,
                      fields: FieldMap = FieldMap()) -> dict[str, str]:
    """CSV texts with per-district counts, rent spread, mean area and amenity ranks."""
    loc = fields.location
    try:
        districts = list(schema.entry(loc).categories)
    except KeyError:
        districts = sorted({str(r.values[loc]) for r in records})
    ordinal = next((e for e in schema.entries if e.kind == "ordinal"), None)
    ranks = sorted({b.rank for b in ordinal.bins}) if ordinal else []
    counts, spread, areas, heat = [], [], [], []
    for dist in districts:
        group = [r for r in records if r.values.get(loc) == dist]
        counts.append([dist, len(group)])
        if group:
            rents = np.asarray([r.target for r in group])
            q = np.quantile(rents, [0.0, 0.25, 0.5, 0.75, 1.0])
            spread.append([dist, len(group), *[float(v) for v in q], float(rents.mean())])
            if fields.area in group[0].values:
                areas.append([dist, float(np.mean([float(r.values[fields.area]) for r in group]))])
        if ordinal is not None:
            heat.append([dist] + [sum(1 for r in group if r.values[ordinal.name] == rk) for rk in ranks])
    out = {
        "plotdata_district_counts.csv": _csv_text(["district", "listings"], counts),
        "plotdata_district_rent.csv": _csv_text(
            ["district", "listings", "min", "q1", "median", "q3", "max", "mean"], spread),
        "plotdata_district_area.csv": _csv_text(["district", "mean_area"], areas),
    }
    if ordinal is not None:
        out["plotdata_district_amenities.csv"] = _csv_text(
            ["district"] + [f"{ordinal.name}_rank_{rk}" for rk in ranks], heat)
    return out


def cmd_preprocess(cfg: RunConfig) -> dict:
    if cfg.dataset is None:
        raise ConfigError("no dataset given (set 'dataset' in the config or pass --dataset)")
    schema = cfg.schema()
    table = ingest.load_csv(cfg.dataset)
    required = cfg.required if cfg.required is not None else schema.required_columns()
    if required == ["*"]:
        required = list(table.column_order)
    cleaned = ingest.clean(table, required)
    records = ingest.parse_records(cleaned.table, schema)
    design = ingest.encode_records(records, schema)
    out = cfg.output_dir
    write_design_matrix(out / "design_matrix.csv", design, schema.target_name)
    _write(out / "records.jsonl",
           "".join(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for r in records))
    _write(out / "schema.json", _dump_json(schema.to_dict()))
    for name, text in region_aggregates(records, schema).items():
        _write(out / name, text)
    summary = {
        "dataset": cfg.dataset.name,
        "stage_counts": cleaned.stage_counts,
        "n": design.n,
        "p": design.p,
        "feature_names": list(design.feature_names),
        "target": schema.target_name,
    }
    _write(out / "summary.json", _dump_json(summary))
    return summary


# ---------------------------------------------------------------- compare


def _load_artifacts(cfg: RunConfig) -> DesignMatrix:
    path = cfg.output_dir / "design_matrix.csv"
    if not path.is_file():
        raise ConfigError(f"{path} not found; run 'lanehouse preprocess' first")
    return read_design_matrix(path)


def cmd_compare(cfg: RunConfig) -> dict:
    if not cfg.models:
        raise ConfigError("no models configured")
    design = _load_artifacts(cfg)
    train_idx, _ = split_indices(design.n, cfg.split)
    train = design.take(train_idx)
    configs, tuning, warnings = [], {}, []
    for m in cfg.models:
        params = dict(m.get("params") or {})
        if m["family"] == "forest":
            params.setdefault("seed", cfg.seed)
        grid = m.get("grid") or {}
        if grid:
            try:
                fixed = {k: v for k, v in params.items() if k not in grid}
                spec = GridSpec(m["family"], {**{k: [v] for k, v in fixed.items()}, **grid},
                                cfg.folds, cfg.scoring, cfg.seed)
                result = grid_search(train, spec)
                params.update(result.best_params)
                tuning[m["label"]] = result.to_dict()
            except (EvaluationError, ValueError) as exc:
                warnings.append(f"{m['label']}: tuning failed ({exc}); using fixed params")
                log.warning(warnings[-1])
        configs.append(ModelConfig(m["label"], m["family"], params))
    table: ComparisonTable = compare_models(design, cfg.split, configs)
    for row in table.rows:
        if row["error"]:
            warnings.append(f"{row['label']}: {row['error']}")
    report = {**table.to_dict(), "tuning": tuning, "seed": cfg.seed,
              "split": {"test_fraction": cfg.split.test_fraction, "shuffled": cfg.split.shuffled},
              "warnings": warnings}
    out = cfg.output_dir
    _write(out / "comparison.json", _dump_json(report))
    _write(out / "comparison.md", table.to_markdown())
    _write(out / "plotdata_comparison.csv", _csv_text(
        ["label", "mse", "mae", "r_squared"],
        [[r["label"], r["mse"], r["mae"], r["r_squared"]] for r in table.rows]))
    return report


# -------------------------------------------------------------------- llm


def _llm_config(raw: dict) -> LlmConfig:
    window = raw.get("price_window", (100.0, 1e6))
    return LlmConfig(
        endpoint_url=raw.get("endpoint_url", LlmConfig.endpoint_url),
        model_name=raw.get("model_name", LlmConfig.model_name),
        temperature=float(raw.get("temperature", 0.0)),
        max_retries=int(raw.get("max_retries", 3)),
        timeout=float(raw.get("timeout", 60.0)),
        request_interval_floor=float(raw.get("request_interval_floor", 0.0)),
        retry_backoff=float(raw.get("retry_backoff", 1.0)),
        mock_mode=bool(raw.get("mock", True)),
        workers=int(raw.get("workers", 1)),
        price_window=(float(window[0]), float(window[1])),
    )


def llm_markdown(rows: Sequence[dict]) -> str:
    # metric columns mirror the published LLM table; coverage goes in its own block
    lines = ["| Method | MSE | MAE | R-Squared |", "|---|---|---|---|"]
    for r in rows:
        if r.get("error"):
            lines.append(f"| {r['label']} | n/a | n/a | n/a |")
            continue
        lines.append(f"| {r['label']} | {format_sci(r['mse'])} | {format_sci(r['mae'])} | "
                     f"{r['r_squared']:.2f} |")
    lines += ["", "| Method | Parsed |", "|---|---|"]
    for r in rows:
        lines.append(f"| {r['label']} | {r.get('successes', 0)}/{r['attempts']} |")
    return "\n".join(lines) + "\n"


def cmd_llm(cfg: RunConfig) -> dict:
    llm_raw = cfg.llm
    llm_cfg = _llm_config(llm_raw)
    client = MockClient() if llm_cfg.mock_mode else ChatCompletionsClient(llm_cfg)
    records_path = cfg.output_dir / "records.jsonl"
    if not records_path.is_file():
        raise ConfigError(f"{records_path} not found; run 'lanehouse preprocess' first")
    records = read_records(records_path)
    schema_path = cfg.output_dir / "schema.json"
    schema = ingest.load_schema(schema_path) if schema_path.is_file() else cfg.schema()
    train_idx, test_idx = split_indices(len(records), cfg.split)
    train = [records[i] for i in train_idx]
    test = [records[i] for i in test_idx]
    limit = llm_raw.get("limit")
    if limit is not None:
        test = test[: int(limit)]
    stats = compute_statistics([r.target for r in train], llm_raw.get("trend", "unspecified"))
    truths = [r.target for r in test]
    rows, runlog = [], []
    for template_id in llm_raw.get("templates") or ["base"]:
        for k in llm_raw.get("k") or [0, 1, 5, 10]:
            run = predict_llm(test, train, int(k), llm_cfg, client, schema, template_id, stats=stats)
            runlog.extend(run.log)
            label = f"LLM ({k}-shot)" if template_id == "base" else f"LLM ({k}-shot, {template_id})"
            row = {"label": label, "k": int(k), "template_id": template_id}
            try:
                metrics = evaluate_llm_run(run.predictions, truths)
                row.update(metrics.as_row(), error=None)
            except EvaluationError as exc:
                row.update(mse=None, mae=None, r_squared=None, coverage=0.0, attempts=len(truths),
                           successes=0, error=str(exc))
            rows.append(row)
    report = {"mock": llm_cfg.mock_mode, "model_name": None if llm_cfg.mock_mode else llm_cfg.model_name,
              "n_test": len(test), "rows": rows,
              "statistics": {"min_price": stats.min_price, "max_price": stats.max_price,
                             "median_price": stats.median_price, "trend": stats.trend}}
    out = cfg.output_dir
    _write(out / "llm_report.json", _dump_json(report))
    _write(out / "llm_report.md", llm_markdown(rows))
    _write(out / "plotdata_llm_shots.csv", _csv_text(
        ["template_id", "k", "mse", "mae", "r_squared", "coverage"],
        [[r["template_id"], r["k"], r["mse"], r["mae"], r["r_squared"], r["coverage"]] for r in rows]))
    _write(out / "runlog.jsonl", "".join(json.dumps(e, sort_keys=True, ensure_ascii=False) + "\n" for e in runlog))
    return report


# ----------------------------------------------------------------- report


def cmd_report(cfg: RunConfig) -> str:
    """Markdown comparison table combining the classical and LLM results present on disk."""
    out = cfg.output_dir
    rows = []
    comp_path, llm_path = out / "comparison.json", out / "llm_report.json"
    if not comp_path.is_file() and not llm_path.is_file():
        raise ConfigError(f"nothing to report in {out}; run compare and/or llm first")
    if comp_path.is_file():
        rows += json.loads(comp_path.read_text(encoding="utf-8"))["rows"]
    if llm_path.is_file():
        rows += [r for r in json.loads(llm_path.read_text(encoding="utf-8"))["rows"]
                 if r["template_id"] == "base"]
    text = comparison_markdown(rows)
    _write(out / "report.md", text)
    return text


# -------------------------------------------------------------------- main


def _parse_k(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k expects comma-separated integers, got {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("--k needs at least one non-negative integer")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanehouse", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config")
    common.add_argument("--seed", type=int, help="global seed (split, folds, forests)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--dataset", type=Path, help="raw CSV path")
    common.add_argument("--schema", type=Path, help="schema JSON path")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="clean and encode the raw CSV")
    sub.add_parser("compare", parents=[common], help="tune and compare the classical models")
    llm = sub.add_parser("llm", parents=[common], help="run k-shot LLM predictions")
    mode = llm.add_mutually_exclusive_group()
    mode.add_argument("--mock", dest="mock", action="store_true", default=None)
    mode.add_argument("--live", dest="mock", action="store_false")
    llm.add_argument("--k", type=_parse_k, help="comma-separated shot counts, e.g. 0,1,5,10")
    llm.add_argument("--workers", type=int)
    llm.add_argument("--limit", type=int, help="only predict the first N test rows")
    llm.add_argument("--template", action="append", dest="templates", help="prompt template id (repeatable)")
    sub.add_parser("report", parents=[common], help="combine reports into one Markdown table")
    return parser


def _overrides(args) -> dict:
    out: dict[str, Any] = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.out is not None:
        out["output_dir"] = str(args.out.resolve())
    if args.dataset is not None:
        out["dataset"] = str(args.dataset.resolve())
    if args.schema is not None:
        out["schema"] = str(args.schema.resolve())
    llm = {}
    for key in ("mock", "k", "workers", "limit", "templates"):
        value = getattr(args, key, None)
        if value is not None:
            llm[key] = value
    if llm:
        out["llm"] = llm
    return out


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, _overrides(args))
        if args.command == "preprocess":
            summary = cmd_preprocess(cfg)
            counts = summary["stage_counts"]
            print(f"rows: {counts['loaded']} -> {counts['after_drop_missing']} -> {counts['after_dedup']}; "
                  f"design matrix {summary['n']} x {summary['p']}")
        elif args.command == "compare":
            report = cmd_compare(cfg)
            print(comparison_markdown(report["rows"], report["winners"]), end="")
            for w in report["warnings"]:
                print(f"warning: {w}", file=sys.stderr)
        elif args.command == "llm":
            report = cmd_llm(cfg)
            print(llm_markdown(report["rows"]), end="")
        else:
            print(cmd_report(cfg), end="")
    except (ConfigError, AuthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
