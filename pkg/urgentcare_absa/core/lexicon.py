"""
Cue-word table for the offline lexicon backend.

The synthetic generator writes its review sentences from the same table, so
generated texts classify back to their planted labels.
"""

import re
from typing import Dict, FrozenSet, Iterable, List

from .absa import Aspect, Polarity

# Words that mark an aspect as mentioned.
CUES: Dict[Aspect, FrozenSet[str]] = {
    Aspect.INTERPERSONAL: frozenset({
        'staff', 'nurse', 'nurses', 'doctor', 'doctors', 'receptionist', 'receptionists',
        'physician', 'provider', 'providers', 'bedside',
    }),
    Aspect.TECHNICAL_QUALITY: frozenset({
        'diagnosis', 'treatment', 'exam', 'examination', 'prescription', 'xray', 'x-ray',
        'stitches', 'medication', 'antibiotics',
    }),
    Aspect.OPERATIONAL_EFFICIENCY: frozenset({
        'wait', 'waiting', 'appointment', 'check-in', 'checkin', 'line', 'minutes', 'queue',
    }),
    Aspect.FINANCES: frozenset({
        'bill', 'billing', 'copay', 'insurance', 'price', 'prices', 'cost', 'costs',
        'charge', 'charges', 'payment',
    }),
    Aspect.FACILITIES: frozenset({
        'clinic', 'facility', 'building', 'parking', 'lobby', 'room', 'rooms', 'bathroom',
    }),
}

# Aspect-specific polar words; they also count as cues for their aspect.
POSITIVE: Dict[Aspect, FrozenSet[str]] = {
    Aspect.INTERPERSONAL: frozenset({'friendly', 'kind', 'polite', 'caring', 'courteous', 'compassionate'}),
    Aspect.TECHNICAL_QUALITY: frozenset({'thorough', 'accurate', 'competent', 'knowledgeable', 'effective'}),
    Aspect.OPERATIONAL_EFFICIENCY: frozenset({'quick', 'fast', 'efficient', 'prompt', 'short'}),
    Aspect.FINANCES: frozenset({'reasonable', 'affordable', 'fair', 'cheap', 'transparent'}),
    Aspect.FACILITIES: frozenset({'clean', 'spotless', 'modern', 'comfortable', 'convenient'}),
}

NEGATIVE: Dict[Aspect, FrozenSet[str]] = {
    Aspect.INTERPERSONAL: frozenset({'rude', 'dismissive', 'unprofessional', 'condescending', 'arrogant'}),
    Aspect.TECHNICAL_QUALITY: frozenset({'misdiagnosed', 'wrong', 'careless', 'incompetent', 'inaccurate'}),
    Aspect.OPERATIONAL_EFFICIENCY: frozenset({'slow', 'long', 'forever', 'delayed', 'disorganized'}),
    Aspect.FINANCES: frozenset({'expensive', 'overpriced', 'outrageous', 'unfair', 'overcharged'}),
    Aspect.FACILITIES: frozenset({'dirty', 'broken', 'crowded', 'filthy', 'cramped'}),
}

GENERIC_POSITIVE = frozenset({'great', 'good', 'excellent', 'amazing', 'wonderful', 'awesome',
                              'best', 'nice', 'helpful', 'perfect'})
GENERIC_NEGATIVE = frozenset({'terrible', 'bad', 'awful', 'horrible', 'worst', 'poor'})

NEGATIONS = frozenset({'not', 'never', 'no', 'hardly', "wasn't", "weren't", "isn't", "didn't",
                       "don't", "aren't", 'nothing'})
NEGATION_WINDOW = 3

_SENTENCE = re.compile(r'[.!?]+')
_TOKEN = re.compile(r"[a-z]+(?:['-][a-z]+)*")


def tokenize(sentence: str) -> List[str]:
    return _TOKEN.findall(sentence.casefold())


def split_sentences(text: str) -> List[str]:
    return [s for s in (part.strip() for part in _SENTENCE.split(text)) if s]


def _mentions(tokens: Iterable[str], aspect: Aspect) -> bool:
    words = CUES[aspect] | POSITIVE[aspect] | NEGATIVE[aspect]
    return any(t in words for t in tokens)


def _sentence_score(tokens: List[str], aspect: Aspect) -> int:
    positive = POSITIVE[aspect] | GENERIC_POSITIVE
    negative = NEGATIVE[aspect] | GENERIC_NEGATIVE
    score = 0
    for i, token in enumerate(tokens):
        if token in positive:
            sign = 1
        elif token in negative:
            sign = -1
        else:
            continue
        if any(t in NEGATIONS for t in tokens[max(0, i - NEGATION_WINDOW):i]):
            sign = -sign
        score += sign
    return score


def lexicon_labels(text: str) -> Dict[Aspect, Polarity]:
    """Label each mentioned aspect by the summed polarity of its sentences.

    A sentence mentioning an aspect contributes +1/-1 per polar word (flipped
    by a preceding negation). Mentioned aspects with a zero sum are neutral.
    """
    totals: Dict[Aspect, int] = {}
    for sentence in split_sentences(text):
        tokens = tokenize(sentence)
        for aspect in Aspect:
            if _mentions(tokens, aspect):
                totals[aspect] = totals.get(aspect, 0) + _sentence_score(tokens, aspect)

    labels = {}
    for aspect, total in totals.items():
        if total > 0:
            labels[aspect] = Polarity.POSITIVE
        elif total < 0:
            labels[aspect] = Polarity.NEGATIVE
        else:
            labels[aspect] = Polarity.NEUTRAL
    return labels
