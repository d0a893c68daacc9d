"""Chat-completions client, offline mock, and price extraction from replies."""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass

import httpx

from .prompts import PromptSpec, fmt_num

API_KEY_ENV = "LANEHOUSE_LLM_API_KEY"
SYSTEM_MESSAGE = (
    "You are a real-estate analyst for Shanghai lane houses. "
    "Reply with a single estimated monthly rent in RMB."
)


class LlmError(Exception):
    pass


class TransportError(LlmError):
    """Retryable failure: network error, timeout, 429 or 5xx."""


class AuthError(LlmError):
    pass


class PriceExtractionError(LlmError):
    def __init__(self, raw: str, window):
        super().__init__(f"no price within {window} in response {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class LlmConfig:
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    request_interval_floor: float = 0.0
    retry_backoff: float = 1.0
    mock_mode: bool = True
    workers: int = 1
    price_window: tuple[float, float] = (100.0, 1e6)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


_NUMBER = re.compile(r"(?<![\d.,])(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?")


def parse_price(response: str, window: tuple[float, float] = (100.0, 1e6)) -> float:
    """First number in ``response`` lying inside ``window`` (thousands separators allowed)."""
    low, high = window
    for m in _NUMBER.finditer(response):
        value = float(m.group(1).replace(",", "") + (m.group(2) or ""))
        if low <= value <= high:
            return value
    raise PriceExtractionError(response, window)


def _lower_median(values) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


class MockClient:
    """Deterministic stand-in: answers with the median exemplar rent.

    With no exemplars it falls back to the training median from the
    statistics block. The prompt text itself is ignored.
    """

    def complete(self, prompt: str, spec: PromptSpec) -> str:
        if spec.exemplars:
            value = _lower_median(ex.rent for ex in spec.exemplars)
        else:
            value = spec.statistics.median_price
        return f"Based on the information provided, the estimated rent is {_grouped(value)} RMB per month."


def _grouped(value: float) -> str:
    text = fmt_num(value)
    whole, _, frac = text.partition(".")
    whole = f"{int(whole):,}"
    return f"{whole}.{frac}" if frac else whole


class ChatCompletionsClient:
    """POSTs ``{model, messages, temperature}`` and reads ``choices[0].message.content``."""

    def __init__(self, cfg: LlmConfig, api_key: str | None = None, transport: httpx.BaseTransport | None = None):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise AuthError(f"set {API_KEY_ENV} to use the live endpoint")
        self.cfg = cfg
        self._http = httpx.Client(
            timeout=cfg.timeout,
            headers={"Authorization": f"Bearer {api_key}"},
            transport=transport,
        )
        self._lock = threading.Lock()
        self._last_request = float("-inf")

    def _wait_turn(self) -> None:
        with self._lock:
            wait = self._last_request + self.cfg.request_interval_floor - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def payload(self, prompt: str) -> dict:
        return {
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.cfg.temperature,
        }

    def complete(self, prompt: str, spec: PromptSpec | None = None) -> str:
        self._wait_turn()
        try:
            resp = self._http.post(self.cfg.endpoint_url, json=self.payload(prompt))
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise LlmError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmError(f"malformed response body: {resp.text[:200]}") from exc

    def close(self) -> None:
        self._http.close()
