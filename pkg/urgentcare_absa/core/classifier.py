"""
Single-review and batch classification on top of a sentiment backend.
"""

import logging
import threading
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from itertools import islice
from typing import Any, Callable, Dict, Iterable, Optional, Set

from ..utils import BackendError, BatchAbortedError, ResponseParseError, ValidationError
from .absa import AspectSentimentSet, ParseStats, build_prompt
from .backends import SentimentBackend
from .corpus import Review

logger = logging.getLogger(__name__)

SUBMIT_WINDOW_FACTOR = 2


@dataclass(frozen=True)
class SentimentRecord:
    """A classified review as persisted: labels plus provenance."""

    sentiments: AspectSentimentSet
    backend: str
    prompt_hash: str

    def to_record(self) -> Dict[str, Any]:
        return self.sentiments.to_record(self.backend, self.prompt_hash)


@dataclass(frozen=True)
class FailureRecord:
    review_id: str
    reason: str
    message: str

    def to_record(self) -> Dict[str, Any]:
        return {'review_id': self.review_id, 'reason': self.reason, 'message': self.message}


@dataclass
class BatchResult:
    results: Dict[str, SentimentRecord] = field(default_factory=dict)
    failures: Dict[str, FailureRecord] = field(default_factory=dict)
    skipped: int = 0
    cached: int = 0
    remote_calls: int = 0
    retries: int = 0
    parse_stats: Dict[str, Any] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        attempted = len(self.results) + len(self.failures)
        return {
            'attempted': attempted,
            'classified': len(self.results),
            'failed': len(self.failures),
            'failure_rate': (len(self.failures) / attempted) if attempted else 0.0,
            'skipped_existing': self.skipped,
            'cache_hits': self.cached,
            'remote_calls': self.remote_calls,
            'retries': self.retries,
            'none_flag': sum(1 for r in self.results.values() if r.sentiments.none_flag),
            'parse': self.parse_stats,
        }


def classify(review: Review, backend: SentimentBackend,
             stats: Optional[ParseStats] = None) -> SentimentRecord:
    """Classify one text-bearing review."""
    if not review.has_text:
        raise ValidationError(f"review {review.review_id} has no text")
    prompt = build_prompt(review.text)
    outcome = backend.classify(review, prompt, stats if stats is not None else ParseStats())
    return SentimentRecord(outcome.sentiments, backend.label, prompt.prompt_hash())


def classify_batch(reviews: Iterable[Review], backend: SentimentBackend,
                   max_workers: int = 1, failure_threshold: float = 0.10,
                   skip_ids: Optional[Set[str]] = None,
                   on_result: Optional[Callable[[SentimentRecord], None]] = None,
                   on_failure: Optional[Callable[[FailureRecord], None]] = None,
                   progress=None) -> BatchResult:
    """Classify reviews concurrently; the result is keyed by review_id.

    Reviews in `skip_ids` are not classified again. Transport and parse
    failures become failure records. Once failures exceed
    `failure_threshold` of the batch the remaining work is cancelled and
    BatchAbortedError carries the summary.
    """
    skip_ids = skip_ids or set()
    pending = []
    result = BatchResult()
    for review in sorted(reviews, key=lambda r: r.review_id):
        if review.review_id in skip_ids:
            result.skipped += 1
        else:
            pending.append(review)

    if any(not r.has_text for r in pending):
        missing = [r.review_id for r in pending if not r.has_text]
        raise ValidationError(f"{len(missing)} review(s) without text, e.g. {missing[0]}")

    stats = ParseStats()
    total = len(pending)
    failure_budget = failure_threshold * total
    lock = threading.Lock()
    aborted = False

    def record(review: Review, outcome_cached: bool, record_value, failure: Optional[FailureRecord]):
        with lock:
            rid = review.review_id
            if rid in result.results or rid in result.failures:
                raise RuntimeError(f"review {rid} classified twice")
            if failure is not None:
                result.failures[rid] = failure
            else:
                result.results[rid] = record_value
                if outcome_cached:
                    result.cached += 1
        if progress is not None:
            progress.update(cached=outcome_cached, failed=failure is not None)
        if failure is not None:
            if on_failure is not None:
                on_failure(failure)
        elif on_result is not None:
            on_result(record_value)

    def work(review: Review):
        prompt = build_prompt(review.text)
        try:
            outcome = backend.classify(review, prompt, stats)
        except BackendError as e:
            logger.debug(f"Backend failure for {review.review_id}: {e}")
            return review, False, None, FailureRecord(review.review_id, 'backend', str(e))
        except ResponseParseError as e:
            logger.debug(f"Unparseable response for {review.review_id}: {e}")
            return review, False, None, FailureRecord(review.review_id, f"parse:{e.reason}", str(e))
        value = SentimentRecord(outcome.sentiments, backend.label, prompt.prompt_hash())
        return review, outcome.cached, value, None

    workers = max(1, int(max_workers))
    # At most `window` reviews are queued or in flight at any time
    window = SUBMIT_WINDOW_FACTOR * workers
    queue = iter(pending)
    futures = set()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        try:
            futures.update(pool.submit(work, review) for review in islice(queue, window))
            while futures:
                done, futures = wait(futures, return_when=FIRST_COMPLETED)
                for future in done:
                    record(*future.result())
                if len(result.failures) > failure_budget:
                    aborted = True
                    for future in futures:
                        future.cancel()
                    # Let in-flight requests land so their responses are cached
                    for future in futures:
                        if not future.cancelled():
                            record(*future.result())
                    break
                futures.update(pool.submit(work, review) for review in islice(queue, window - len(futures)))
        except BaseException:
            for future in futures:
                future.cancel()
            raise

    result.results = dict(sorted(result.results.items()))
    result.failures = dict(sorted(result.failures.items()))
    result.remote_calls = backend.remote_calls
    result.retries = backend.retries
    result.parse_stats = stats.to_dict()

    summary = result.summary()
    logger.info(f"Classified {summary['classified']}/{total} reviews with {backend.label} "
                f"({summary['cache_hits']} cached, {summary['failed']} failed, "
                f"{summary['retries']} retries, {result.skipped} already done)")
    if stats.fence_stripped:
        logger.info(f"{stats.fence_stripped} response(s) were wrapped in a Markdown fence")

    if aborted or (total and len(result.failures) > failure_budget):
        raise BatchAbortedError(
            f"failure rate {summary['failure_rate']:.1%} exceeds threshold "
            f"{failure_threshold:.0%} ({summary['failed']} failed of {summary['attempted']} attempted)",
            summary,
        )
    return result
