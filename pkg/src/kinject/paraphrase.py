"""Chat-completion paraphrase client with retries, on-disk caching, and mocks.

The HTTP client speaks the common chat-completion wire shape
(POST {base_url}/chat/completions) so any hosted or local model works.
The mock clients make the paraphrase pass fully reproducible offline.
"""

import hashlib
import os
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import ConfigError, EmptyCompletionError, ProtocolError, TransportError

PARAPHRASE_INSTRUCTION = (
    "Rewrite the following radiology caption in natural fluent English "
    "without adding or removing medical facts."
)

BEARER_TOKEN_ENV = "KINJECT_API_TOKEN"


@dataclass(frozen=True)
class ParaphraseConfig:
    base_url: str
    model_tag: str
    bearer_token: str = None
    timeout: float = 30.0
    max_retries: int = 3
    temperature: float = 0.7
    cache_dir: str = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class ParaphraseResult:
    text: str
    model_tag: str
    from_cache: bool = False


def _cache_key(model_tag, input_text, request_seed):
    h = hashlib.sha256()
    h.update(model_tag.encode("utf-8"))
    h.update(b"\x00")
    h.update(input_text.encode("utf-8"))
    h.update(b"\x00")
    h.update(str(request_seed).encode("utf-8"))
    return h.hexdigest()


class _Cache:
    """Per-key mutually exclusive file cache of raw completion text."""

    def __init__(self, cache_dir):
        self.cache_dir = cache_dir
        self._locks = {}
        self._guard = threading.Lock()
        os.makedirs(cache_dir, exist_ok=True)

    def lock_for(self, key):
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def get(self, key):
        path = os.path.join(self.cache_dir, key)
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return fh.read()
        return None

    def put(self, key, text):
        with open(os.path.join(self.cache_dir, key), "w", encoding="utf-8") as fh:
            fh.write(text)


class HttpParaphraseClient:
    """Paraphrases via a chat-completion endpoint, retrying transport errors
    with exponential backoff and caching completed requests when configured."""

    def __init__(self, cfg: ParaphraseConfig, backoff_base=0.5, sleep=time.sleep):
        if not cfg.base_url:
            raise ConfigError("base_url is required")
        self.cfg = cfg
        self.model_tag = cfg.model_tag
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._cache = _Cache(cfg.cache_dir) if cfg.cache_dir else None

    def _headers(self):
        token = self.cfg.bearer_token or os.environ.get(BEARER_TOKEN_ENV)
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _request(self, input_text, request_seed):
        body = {
            "model": self.cfg.model_tag,
            "messages": [
                {"role": "system", "content": PARAPHRASE_INSTRUCTION},
                {"role": "user", "content": input_text},
            ],
            "temperature": self.cfg.temperature,
            "seed": request_seed,
        }
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        last_exc = None
        for attempt in range(self.cfg.max_retries + 1):
            try:
                resp = requests.post(
                    url, json=body, headers=self._headers(), timeout=self.cfg.timeout
                )
                resp.raise_for_status()
            except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
                last_exc = exc
                if attempt < self.cfg.max_retries:
                    self._sleep(self.backoff_base * (2**attempt))
                continue
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProtocolError(f"malformed completion response: {exc}") from exc
            if not isinstance(content, str):
                raise ProtocolError("completion content is not a string")
            return content
        raise TransportError(f"request failed after {self.cfg.max_retries + 1} attempts: {last_exc}")

    def paraphrase(self, input_text, request_seed):
        if not input_text:
            raise EmptyCompletionError("input text must be nonempty")
        if self._cache is not None:
            key = _cache_key(self.model_tag, input_text, request_seed)
            with self._cache.lock_for(key):
                cached = self._cache.get(key)
                if cached is not None:
                    return ParaphraseResult(cached, self.model_tag, from_cache=True)
                text = self._request(input_text, request_seed).strip()
                if not text:
                    raise EmptyCompletionError("model returned an empty completion")
                self._cache.put(key, text)
                return ParaphraseResult(text, self.model_tag)
        text = self._request(input_text, request_seed).strip()
        if not text:
            raise EmptyCompletionError("model returned an empty completion")
        return ParaphraseResult(text, self.model_tag)


@dataclass
class MockParaphraseClient:
    """In-process stand-in; deterministic by construction."""

    fn: callable = staticmethod(lambda text: text)
    model_tag: str = "mock-identity"

    def paraphrase(self, input_text, request_seed):
        if not input_text:
            raise EmptyCompletionError("input text must be nonempty")
        return ParaphraseResult(self.fn(input_text).strip(), self.model_tag)


def identity_mock():
    return MockParaphraseClient()


def uppercase_mock():
    return MockParaphraseClient(fn=str.upper, model_tag="mock-uppercase")


@dataclass
class FailingParaphraseClient:
    model_tag: str = "mock-failing"

    def paraphrase(self, input_text, request_seed):
        raise TransportError("mock client always fails")


def paraphrase(cfg: ParaphraseConfig, input_text, request_seed):
    """One-shot convenience wrapper over HttpParaphraseClient."""
    return HttpParaphraseClient(cfg).paraphrase(input_text, request_seed)
