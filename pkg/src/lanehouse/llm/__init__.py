"""Few-shot LLM rent prediction with a deterministic offline mock."""

from .client import (
    API_KEY_ENV,
    AuthError,
    ChatCompletionsClient,
    LlmConfig,
    LlmError,
    MockClient,
    PriceExtractionError,
    TransportError,
    parse_price,
)
from .pipeline import LlmMetrics, LlmResult, LlmRun, evaluate_llm_run, predict_llm, prompt_for
from .prompts import (
    INSTRUCTION,
    TEMPLATES,
    Exemplar,
    FieldMap,
    HouseDescription,
    PromptSpec,
    StatsBlock,
    build_prompt,
    compute_statistics,
    describe,
)
from .shots import Shot, ShotIndex, ShotSet, select_shots

__all__ = [
    "API_KEY_ENV", "AuthError", "ChatCompletionsClient", "LlmConfig", "LlmError", "MockClient",
    "PriceExtractionError", "TransportError", "parse_price", "LlmMetrics", "LlmResult", "LlmRun",
    "evaluate_llm_run", "predict_llm", "prompt_for", "INSTRUCTION", "TEMPLATES", "Exemplar", "FieldMap",
    "HouseDescription", "PromptSpec", "StatsBlock", "build_prompt", "compute_statistics", "describe",
    "Shot", "ShotIndex", "ShotSet", "select_shots",
]
