"""Core modules for the urgent care ABSA pipeline."""

from .absa import Aspect, AspectSentimentSet, BackendConfig, Polarity, build_prompt, parse_llm_response
from .backends import create_backend
from .classifier import classify, classify_batch

__all__ = [
    'Aspect', 'AspectSentimentSet', 'BackendConfig', 'Polarity', 'build_prompt', 'parse_llm_response',
    'create_backend', 'classify', 'classify_batch',
]
