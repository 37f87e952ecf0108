"""
urgentcare-absa - aspect-based sentiment analysis of urgent care reviews.

Classifies review text into five patient-experience aspects, aggregates the
labels per facility, joins census block group covariates and fits rating
regressions.
"""

__version__ = "1.0.0"
__description__ = "Aspect-based sentiment pipeline for urgent care reviews"
