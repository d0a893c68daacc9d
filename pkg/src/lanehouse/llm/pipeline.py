"""Batch LLM prediction: shots, statistics, prompt, call, parse, retry, log."""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..evaluation import EvaluationError, MetricsReport, evaluate
from ..ingest import FeatureSchema, HouseRecord
from .client import AuthError, LlmConfig, LlmError, PriceExtractionError, TransportError, parse_price
from .prompts import Exemplar, FieldMap, PromptSpec, StatsBlock, build_prompt, compute_statistics, describe
from .shots import ShotIndex


class Client(Protocol):
    def complete(self, prompt: str, spec: PromptSpec) -> str: ...


@dataclass(frozen=True)
class LlmResult:
    index: int
    row: int
    prediction: float | None
    error: str | None


@dataclass
class LlmRun:
    k: int
    template_id: str
    results: list[LlmResult]
    log: list[dict]
    prompts: list[str]

    @property
    def predictions(self) -> list[float | None]:
        return [r.prediction for r in self.results]


def prompt_for(query: HouseRecord, index: ShotIndex, k: int, stats: StatsBlock, template_id: str,
               fields: FieldMap = FieldMap()) -> tuple[PromptSpec, str]:
    shots = index.select(query, k)
    exemplars = tuple(Exemplar(describe(s.record, fields), s.rent) for s in shots.exemplars)
    spec = PromptSpec(describe(query, fields), stats, exemplars, template_id=template_id)
    return spec, build_prompt(spec)


def _ask(client: Client, prompt: str, spec: PromptSpec, cfg: LlmConfig):
    """Call the client until a price parses; returns (value, raw, retries, error)."""
    raw, error = None, None
    for attempt in range(cfg.max_retries + 1):
        if attempt and cfg.retry_backoff > 0 and isinstance(error, TransportError):
            time.sleep(cfg.retry_backoff * 2 ** (attempt - 1))
        try:
            raw = client.complete(prompt, spec)
        except AuthError:
            raise
        except TransportError as exc:
            error = exc
            continue
        except LlmError as exc:
            return None, raw, attempt, exc
        try:
            return parse_price(raw, cfg.price_window), raw, attempt, None
        except PriceExtractionError as exc:
            error = exc
    return None, raw, cfg.max_retries, error


def predict_llm(queries: Sequence[HouseRecord], train: Sequence[HouseRecord], k: int, cfg: LlmConfig,
                client: Client, schema: FeatureSchema, template_id: str = "base",
                fields: FieldMap = FieldMap(), stats: StatsBlock | None = None,
                weights=None) -> LlmRun:
    """Predict each query's rent; per-record failures become error entries.

    Output order follows ``queries`` whatever the worker count. Latency is
    recorded as 0 in mock mode so that run logs are reproducible.
    """
    stats = stats or compute_statistics([r.target for r in train])
    index = ShotIndex(train, schema, weights, fields.location)
    n = len(queries)
    results: list[LlmResult | None] = [None] * n
    log: list[dict | None] = [None] * n
    prompts: list[str | None] = [None] * n

    def one(i: int) -> None:
        query = queries[i]
        spec, prompt = prompt_for(query, index, k, stats, template_id, fields)
        start = time.perf_counter()
        value, raw, retries, error = _ask(client, prompt, spec, cfg)
        latency = 0.0 if cfg.mock_mode else round((time.perf_counter() - start) * 1000, 3)
        err = None if error is None else f"{type(error).__name__}: {error}"
        results[i] = LlmResult(i, query.row, value, err)
        prompts[i] = prompt
        log[i] = {
            "index": i,
            "row": query.row,
            "k": k,
            "template_id": template_id,
            "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "raw_response": raw,
            "parsed": value,
            "latency_ms": latency,
            "retries": retries,
            "error": err,
        }

    if cfg.workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for fut in [pool.submit(one, i) for i in range(n)]:
                fut.result()
    else:
        for i in range(n):
            one(i)
    return LlmRun(k, template_id, results, log, prompts)


@dataclass(frozen=True)
class LlmMetrics:
    report: MetricsReport
    coverage: float
    attempts: int
    successes: int

    def as_row(self) -> dict:
        return {**self.report.as_row(), "coverage": self.coverage, "attempts": self.attempts,
                "successes": self.successes}


def evaluate_llm_run(predictions: Sequence[float | None], truths: Sequence[float]) -> LlmMetrics:
    """Metrics over the successfully parsed predictions, plus the coverage fraction."""
    if len(predictions) != len(truths):
        raise EvaluationError("predictions and truths differ in length")
    ok = [i for i, p in enumerate(predictions) if p is not None and math.isfinite(p)]
    if not ok:
        raise EvaluationError("no successful predictions to evaluate")
    y = np.asarray([truths[i] for i in ok], dtype=np.float64)
    yhat = np.asarray([predictions[i] for i in ok], dtype=np.float64)
    return LlmMetrics(evaluate(y, yhat), len(ok) / len(predictions), len(predictions), len(ok))
