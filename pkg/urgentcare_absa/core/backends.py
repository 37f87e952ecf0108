"""
Sentiment backends: a remote chat-completion model, an offline cue-word
lexicon, and a replay of previously cached remote responses.
"""

import logging
import os
import random
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from openai import (APIConnectionError, APIError, APITimeoutError, InternalServerError,
                    OpenAI, RateLimitError)

from ..utils import BackendError, ConfigError, ResponseParseError
from ..utils.io import read_json, sha256_text, write_json
from .absa import (AspectSentimentSet, BackendConfig, BackendKind, ParseStats, PromptBundle,
                   model_slug, parse_llm_response)
from .corpus import Review
from .lexicon import lexicon_labels

logger = logging.getLogger(__name__)

TRANSIENT_ERRORS = (APIConnectionError, APITimeoutError, RateLimitError, InternalServerError)

BACKOFF_BASE = 1.0
BACKOFF_JITTER = 0.25


def cache_key(model_name: str, review_id: str, prompt_hash: str) -> str:
    return sha256_text('\0'.join((model_name, review_id, prompt_hash)))


class ResponseCache:
    """Content-addressed store of raw model responses, one JSON file per key."""

    def __init__(self, root, model_name: str):
        self.model_name = model_name
        self.root = Path(root) / model_slug(model_name)
        self._guard = threading.Lock()
        self._locks: Dict[str, threading.Lock] = {}

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def _lock_for(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def get(self, key: str) -> Optional[Dict[str, Any]]:
        path = self.path(key)
        if not path.exists():
            return None
        with self._lock_for(key):
            try:
                return read_json(path)
            except Exception as e:
                logger.warning(f"Ignoring unreadable cache entry {path}: {e}")
                return None

    def put(self, key: str, record: Dict[str, Any]):
        with self._lock_for(key):
            write_json(self.path(key), record)


class RateLimiter:
    """Spaces calls at least 1/rate seconds apart across threads."""

    def __init__(self, rate: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.interval = 1.0 / rate
        self.clock = clock
        self.sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self):
        with self._lock:
            now = self.clock()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self.sleep(start - now)


@dataclass
class Outcome:
    sentiments: AspectSentimentSet
    cached: bool = False


class SentimentBackend(ABC):
    """Classifies one review given its rendered prompt."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._counter_lock = threading.Lock()
        self.remote_calls = 0
        self.retries = 0

    @property
    def label(self) -> str:
        return self.config.label

    def _count(self, remote_calls: int = 0, retries: int = 0):
        with self._counter_lock:
            self.remote_calls += remote_calls
            self.retries += retries

    @abstractmethod
    def classify(self, review: Review, prompt: PromptBundle, stats: ParseStats) -> Outcome:
        ...

    def decoding_parameters(self) -> Dict[str, Any]:
        return {}


class LexiconBackend(SentimentBackend):
    """Deterministic cue-word classifier; a pure function of the review text."""

    def classify(self, review: Review, prompt: PromptBundle, stats: ParseStats) -> Outcome:
        return Outcome(AspectSentimentSet.of(review.review_id, lexicon_labels(review.text or '')))


class ReplayCacheBackend(SentimentBackend):
    """Answers only from the response cache; never touches the network."""

    def __init__(self, config: BackendConfig, cache: ResponseCache):
        super().__init__(config)
        self.cache = cache

    def classify(self, review: Review, prompt: PromptBundle, stats: ParseStats) -> Outcome:
        key = cache_key(self.config.model_name, review.review_id, prompt.prompt_hash())
        entry = self.cache.get(key)
        if entry is None:
            raise BackendError(f"no cached response for review {review.review_id} "
                               f"(model {self.config.model_name})", review.review_id)
        sentiments = parse_llm_response(entry.get('response'), review.review_id,
                                        self.config.lenient_fences, stats)
        return Outcome(sentiments, cached=True)

    def decoding_parameters(self) -> Dict[str, Any]:
        return {'model': self.config.model_name, 'temperature': self.config.temperature}


class RemoteLLMBackend(SentimentBackend):
    """OpenAI-compatible chat-completion backend with caching and backoff."""

    def __init__(self, config: BackendConfig, cache: ResponseCache, client: Optional[Any] = None,
                 sleep: Callable[[float], None] = time.sleep, seed: int = 0):
        super().__init__(config)
        self.cache = cache
        self.sleep = sleep
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()
        self.limiter = RateLimiter(config.rate_limit, sleep=sleep)

        if client is None:
            api_key = os.environ.get(config.api_key_env)
            if not api_key:
                raise ConfigError(f"{config.api_key_env} is not set; "
                                  f"the remote-llm backend needs an API key")
            # Retries are handled here so they can be counted and jittered
            client = OpenAI(base_url=config.base_url, api_key=api_key,
                            max_retries=0, timeout=config.request_timeout)
        self.client = client

    def decoding_parameters(self) -> Dict[str, Any]:
        return {'model': self.config.model_name, 'temperature': self.config.temperature}

    def _backoff(self, attempt: int) -> float:
        with self._rng_lock:
            jitter = self._rng.random() * BACKOFF_JITTER
        return BACKOFF_BASE * (2 ** attempt) * (1.0 + jitter)

    def _request(self, prompt_text: str, review_id: str) -> str:
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            self.limiter.wait()
            try:
                self._count(remote_calls=1)
                completion = self.client.chat.completions.create(
                    model=self.config.model_name,
                    messages=[{"role": "user", "content": prompt_text}],
                    temperature=self.config.temperature,
                )
            except TRANSIENT_ERRORS as e:
                if attempt == attempts - 1:
                    raise BackendError(f"request for review {review_id} failed after "
                                       f"{attempts} attempts: {e}", review_id)
                delay = self._backoff(attempt)
                logger.debug(f"Transient error for {review_id} ({e}); retrying in {delay:.2f}s")
                self._count(retries=1)
                self.sleep(delay)
            except APIError as e:
                raise BackendError(f"request for review {review_id} failed: {e}", review_id)
            else:
                choices = getattr(completion, 'choices', None)
                if not choices:
                    raise BackendError(f"response for review {review_id} has no choices", review_id)
                message = getattr(choices[0], 'message', None)
                return getattr(message, 'content', None) or ''
        raise BackendError(f"request for review {review_id} was not attempted", review_id)

    def classify(self, review: Review, prompt: PromptBundle, stats: ParseStats) -> Outcome:
        prompt_hash = prompt.prompt_hash()
        key = cache_key(self.config.model_name, review.review_id, prompt_hash)

        entry = self.cache.get(key)
        if entry is not None:
            try:
                return Outcome(parse_llm_response(entry.get('response'), review.review_id,
                                                  self.config.lenient_fences, stats), cached=True)
            except ResponseParseError:
                logger.debug(f"Cached response for {review.review_id} does not parse; re-requesting")

        rendered = prompt.render()
        last_error: Optional[ResponseParseError] = None
        for _ in range(self.config.max_retries + 1):
            raw = self._request(rendered, review.review_id)
            self.cache.put(key, {
                'model': self.config.model_name,
                'review_id': review.review_id,
                'prompt_hash': prompt_hash,
                'temperature': self.config.temperature,
                'response': raw,
            })
            try:
                return Outcome(parse_llm_response(raw, review.review_id,
                                                  self.config.lenient_fences, stats))
            except ResponseParseError as e:
                last_error = e
        raise last_error


def create_backend(config: BackendConfig, cache_dir, client: Optional[Any] = None,
                   sleep: Callable[[float], None] = time.sleep) -> SentimentBackend:
    """Instantiate the backend named by `config.backend_kind`."""
    if config.backend_kind is BackendKind.LEXICON:
        return LexiconBackend(config)
    cache = ResponseCache(cache_dir, config.model_name)
    if config.backend_kind is BackendKind.REPLAY:
        return ReplayCacheBackend(config, cache)
    return RemoteLLMBackend(config, cache, client=client, sleep=sleep)
