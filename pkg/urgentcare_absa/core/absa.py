"""
Aspect-based sentiment types, prompt construction and response validation.
"""

import json
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple

from ..utils import ConfigError, ResponseParseError, ValidationError
from ..utils.io import sha256_text
from . import prompts


class Aspect(str, Enum):
    """The five patient-experience aspects; values are the prompt's JSON keys."""

    INTERPERSONAL = 'Interpersonal Factors'
    TECHNICAL_QUALITY = 'Technical Quality'
    OPERATIONAL_EFFICIENCY = 'Operational Efficiency'
    FINANCES = 'Finances'
    FACILITIES = 'Facilities/Availability'

    @property
    def slug(self) -> str:
        return ASPECT_SLUGS[self]

    @property
    def label(self) -> str:
        """Short display name used in tables."""
        return 'Facilities' if self is Aspect.FACILITIES else self.value


ASPECT_ORDER: Tuple[Aspect, ...] = (
    Aspect.INTERPERSONAL,
    Aspect.TECHNICAL_QUALITY,
    Aspect.OPERATIONAL_EFFICIENCY,
    Aspect.FINANCES,
    Aspect.FACILITIES,
)

ASPECT_SLUGS = {
    Aspect.INTERPERSONAL: 'interpersonal',
    Aspect.TECHNICAL_QUALITY: 'technical_quality',
    Aspect.OPERATIONAL_EFFICIENCY: 'operational_efficiency',
    Aspect.FINANCES: 'finances',
    Aspect.FACILITIES: 'facilities',
}

ASPECT_BY_NAME = {aspect.value: aspect for aspect in Aspect}


def aspect_from_name(name: str) -> Aspect:
    """Lenient lookup for human-edited files: exact value, slug, or short label."""
    key = name.strip()
    if key in ASPECT_BY_NAME:
        return ASPECT_BY_NAME[key]
    folded = key.casefold()
    for aspect in Aspect:
        if folded in (aspect.value.casefold(), aspect.slug, aspect.label.casefold()):
            return aspect
    raise ValidationError(f"unknown aspect: {name!r}")


class Polarity(str, Enum):
    NEGATIVE = 'negative'
    NEUTRAL = 'neutral'
    POSITIVE = 'positive'


POLARITY_BY_VALUE = {p.value: p for p in Polarity}
POLARITY_ORDER: Tuple[Polarity, ...] = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)

_SCORES = {Polarity.NEGATIVE: -1.0, Polarity.NEUTRAL: 0.0, Polarity.POSITIVE: 1.0}


def polarity_to_score(polarity: Polarity) -> float:
    """Positive -> +1, Neutral -> 0, Negative -> -1."""
    return _SCORES[Polarity(polarity)]


NONE_RESPONSE = {'None': 'None'}


@dataclass(frozen=True)
class AspectSentimentSet:
    """Per-review labels; an absent aspect means 'not mentioned'."""

    review_id: str
    labels: Mapping[Aspect, Polarity] = field(default_factory=dict)
    none_flag: bool = False

    def __post_init__(self):
        if self.none_flag and self.labels:
            raise ValidationError("none_flag set on a review with aspect labels")
        if len(self.labels) > len(ASPECT_ORDER):
            raise ValidationError("more than five aspect labels")

    @classmethod
    def of(cls, review_id: str, labels: Mapping[Aspect, Polarity]) -> 'AspectSentimentSet':
        ordered = {a: Polarity(labels[a]) for a in ASPECT_ORDER if a in labels}
        return cls(review_id, ordered, not ordered)

    def scores(self) -> Dict[Aspect, float]:
        return {aspect: polarity_to_score(p) for aspect, p in self.labels.items()}

    def to_record(self, backend: str, prompt_hash: Optional[str]) -> Dict[str, Any]:
        return {
            'review_id': self.review_id,
            'labels': {a.value: p.value for a, p in self.labels.items()},
            'none_flag': self.none_flag,
            'backend': backend,
            'prompt_hash': prompt_hash,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> 'AspectSentimentSet':
        labels = {ASPECT_BY_NAME[k]: POLARITY_BY_VALUE[v] for k, v in (record.get('labels') or {}).items()}
        return cls.of(str(record['review_id']), labels)


def serialize_labels(sentiments: AspectSentimentSet) -> str:
    """Canonical JSON text of a label set, aspects in prompt order."""
    if not sentiments.labels:
        return json.dumps(NONE_RESPONSE)
    return json.dumps({a.value: sentiments.labels[a].value for a in ASPECT_ORDER if a in sentiments.labels})


@dataclass(frozen=True)
class PromptBundle:
    intro: str
    question: str
    text: str
    output: str

    def segments(self) -> Tuple[str, str, str, str]:
        return (self.intro, self.question, self.text, self.output)

    def render(self) -> str:
        """The four segments in order, separated by one blank line.

        The separator is part of the prompt hash, so changing it invalidates
        every cached response.
        """
        return '\n\n'.join(self.segments())

    def prompt_hash(self) -> str:
        return sha256_text(self.render())


def build_prompt(review_text: str) -> PromptBundle:
    """Assemble the four prompt segments around `review_text`."""
    if not isinstance(review_text, str) or not review_text.strip():
        raise ValidationError("review text must be non-empty")
    head, tail = prompts.TEXT_TEMPLATE.split(prompts.REVIEW_PLACEHOLDER, 1)
    return PromptBundle(prompts.INTRO, prompts.QUESTION, head + review_text + tail, prompts.OUTPUT)


class ParseStats:
    """Thread-safe tallies of parser outcomes."""

    def __init__(self):
        self._lock = threading.Lock()
        self.accepted = 0
        self.fence_stripped = 0
        self.rejected: Counter = Counter()

    def record_accept(self, fence_stripped: bool):
        with self._lock:
            self.accepted += 1
            if fence_stripped:
                self.fence_stripped += 1

    def record_reject(self, reason: str):
        with self._lock:
            self.rejected[reason] += 1

    def to_dict(self) -> Dict[str, Any]:
        with self._lock:
            return {
                'accepted': self.accepted,
                'fence_stripped': self.fence_stripped,
                'rejected': dict(sorted(self.rejected.items())),
            }


_FENCE = re.compile(r'\A```[A-Za-z0-9_-]*[ \t]*\r?\n(.*?)\r?\n[ \t]*```\Z', re.DOTALL)


def _reject_duplicates(pairs):
    keys = [k for k, _ in pairs]
    if len(keys) != len(set(keys)):
        raise ResponseParseError("duplicate keys in response", 'duplicate_key')
    return dict(pairs)


def _strip_fence(text: str, lenient: bool) -> Tuple[str, bool]:
    if not text.startswith('```'):
        return text, False
    if not lenient:
        raise ResponseParseError("response wrapped in a Markdown fence", 'fenced')
    match = _FENCE.match(text)
    if not match or '```' in match.group(1):
        raise ResponseParseError("malformed or nested Markdown fence", 'fence')
    return match.group(1).strip(), True


def _parse(raw: Any, review_id: str, lenient: bool) -> Tuple[AspectSentimentSet, bool]:
    if not isinstance(raw, str):
        raise ResponseParseError("response is not text", 'not_text')
    text, fenced = _strip_fence(raw.strip(), lenient)
    if not text:
        raise ResponseParseError("empty response", 'empty')

    decoder = json.JSONDecoder(object_pairs_hook=_reject_duplicates)
    try:
        obj, end = decoder.raw_decode(text)
    except json.JSONDecodeError:
        raise ResponseParseError("response is not a JSON object", 'not_json')
    if text[end:].strip():
        raise ResponseParseError("content after the JSON object", 'trailing_content')
    if not isinstance(obj, dict):
        raise ResponseParseError("response JSON is not an object", 'not_object')

    if 'None' in obj:
        if obj == NONE_RESPONSE:
            return AspectSentimentSet(review_id, {}, True), fenced
        raise ResponseParseError("'None' response mixed with other content", 'bad_none')
    if not obj:
        raise ResponseParseError('empty JSON object; no aspects must be {"None": "None"}', 'empty_object')

    labels: Dict[Aspect, Polarity] = {}
    for key, value in obj.items():
        aspect = ASPECT_BY_NAME.get(key)
        if aspect is None:
            raise ResponseParseError(f"unknown aspect {key!r}", 'unknown_aspect')
        polarity = POLARITY_BY_VALUE.get(value) if isinstance(value, str) else None
        if polarity is None:
            raise ResponseParseError(f"invalid sentiment {value!r} for {key!r}", 'invalid_sentiment')
        labels[aspect] = polarity
    return AspectSentimentSet.of(review_id, labels), fenced


def parse_llm_response(raw: str, review_id: str = '', lenient: bool = True,
                       stats: Optional[ParseStats] = None) -> AspectSentimentSet:
    """Validate a model response against the five-aspect JSON contract.

    Accepts an object whose keys are exact aspect names with values
    "positive" / "negative" / "neutral", or exactly {"None": "None"}. In
    lenient mode a single Markdown code fence around the object is stripped
    and counted. Anything else raises ResponseParseError.
    """
    try:
        result, fenced = _parse(raw, review_id, lenient)
    except ResponseParseError as e:
        if stats is not None:
            stats.record_reject(e.reason)
        raise
    if stats is not None:
        stats.record_accept(fenced)
    return result


class BackendKind(str, Enum):
    REMOTE = 'remote-llm'
    LEXICON = 'lexicon'
    REPLAY = 'replay-cache'


@dataclass(frozen=True)
class BackendConfig:
    backend_kind: BackendKind = BackendKind.LEXICON
    model_name: str = 'openai/gpt-4o-mini'
    max_retries: int = 3
    request_timeout: float = 60.0
    rate_limit: float = 5.0
    temperature: float = 0.0
    base_url: str = 'https://openrouter.ai/api/v1'
    api_key_env: str = 'OPENROUTER_API_KEY'
    max_workers: int = 8
    failure_threshold: float = 0.10
    lenient_fences: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, 'backend_kind', BackendKind(self.backend_kind))
        except ValueError:
            raise ConfigError(f"unknown backend kind: {self.backend_kind}")
        if int(self.max_retries) < 0:
            raise ConfigError("backend.max_retries must be >= 0")
        if not float(self.rate_limit) > 0:
            raise ConfigError("backend.rate_limit must be > 0")
        if not float(self.request_timeout) > 0:
            raise ConfigError("backend.request_timeout must be > 0")
        if int(self.max_workers) < 1:
            raise ConfigError("backend.max_workers must be >= 1")
        if not 0.0 <= float(self.failure_threshold) <= 1.0:
            raise ConfigError("backend.failure_threshold must be in [0, 1]")

    @property
    def label(self) -> str:
        """Name of the prediction set; remote and replay runs of a model share it."""
        if self.backend_kind is BackendKind.LEXICON:
            return 'lexicon'
        return model_slug(self.model_name)


def model_slug(model_name: str) -> str:
    return re.sub(r'[^A-Za-z0-9._-]+', '_', model_name).strip('_') or 'model'
