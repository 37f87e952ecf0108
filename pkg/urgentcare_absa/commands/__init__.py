"""Command modules for urgentcare-absa."""

from .config import config
from .stages import aggregate, classify, evaluate, fit, ingest, join_census, report
from .synthetic import e2e_check, synthesize

__all__ = ['ingest', 'classify', 'evaluate', 'aggregate', 'join_census', 'fit', 'report',
           'synthesize', 'e2e_check', 'config']
