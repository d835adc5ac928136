"""Minimal OpenAI-compatible chat-completions client with retry/backoff."""

from __future__ import annotations

import logging
import os
import time
from typing import Callable

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "TRIREC_LLM_API_KEY"
BASE_URL_ENV = "TRIREC_LLM_BASE_URL"
RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class LLMTransportError(RuntimeError):
    """Timeout, non-2xx after retries, or a malformed response body."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ChatClient:
    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key: str | None = None,
        temperature: float = 0.0,
        max_retries: int = 3,
        timeout_ms: int = 30000,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint or not model:
            raise ValueError("LLM endpoint and model must be non-empty")
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout_ms / 1000.0, headers=headers, transport=transport)

    @classmethod
    def from_config(cls, cfg, **kwargs) -> "ChatClient":
        endpoint = cfg.llm_endpoint or os.environ.get(BASE_URL_ENV, "")
        return cls(
            endpoint,
            cfg.llm_model,
            temperature=cfg.llm_temperature,
            max_retries=cfg.llm_max_retries,
            timeout_ms=cfg.llm_timeout_ms,
            **kwargs,
        )

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def chat(self, messages: list[dict[str, str]]) -> str:
        body = {"model": self.model, "messages": messages, "temperature": self.temperature}
        last_error: LLMTransportError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_base * 2 ** (attempt - 1)
                logger.debug("retrying chat call in %.2fs (%s)", delay, last_error)
                self._sleep(delay)
            try:
                resp = self._client.post(self.url, json=body)
            except httpx.TransportError as exc:
                last_error = LLMTransportError(f"transport error: {exc}")
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = LLMTransportError(f"HTTP {resp.status_code}", resp.status_code)
                continue
            if not resp.is_success:
                raise LLMTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", resp.status_code)
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise LLMTransportError(f"malformed response body: {exc}") from exc
            if not isinstance(content, str):
                raise LLMTransportError("malformed response body: content is not text")
            return content
        assert last_error is not None
        raise last_error


def llm_chat_call(request, cfg, **client_kwargs) -> str:
    """One chat-completions round trip for a prompt bundle.

    ``request`` is either a list of ``{role, content}`` messages or a dict
    holding one under ``"messages"``.
    """
    if cfg.backend != "llm":
        raise ValueError("llm_chat_call requires backend='llm'")
    messages = request["messages"] if isinstance(request, dict) else request
    with ChatClient.from_config(cfg, **client_kwargs) as client:
        return client.chat(messages)
