import itertools
import json

import pytest

from factories import review
from urgentcare_absa.core import prompts
from urgentcare_absa.core.absa import (ASPECT_ORDER, Aspect, AspectSentimentSet, BackendConfig, BackendKind,
                                       ParseStats, Polarity, build_prompt, parse_llm_response,
                                       polarity_to_score, serialize_labels)
from urgentcare_absa.core.backends import LexiconBackend, RemoteLLMBackend, ResponseCache
from urgentcare_absa.core.classifier import classify
from urgentcare_absa.utils import ConfigError, ResponseParseError, ValidationError

pytestmark = pytest.mark.unit

EXAMPLE_1 = ('The doctor was very kind and took the time to explain everything to me in detail. '
             'The diagnosis was accurate, and I felt well cared for. The clinic was also clean and comfortable.')
EXAMPLE_2 = ('I had to wait for more than three hours even though I had an appointment. '
             'The staff was rude and unhelpful. Also, the bill had extra charges that were not explained to me.')
EXPECTED_1 = '{\n  "Interpersonal Factors": "positive",\n  "Technical Quality": "positive",\n' \
             '  "Facilities/Availability": "positive"\n}'
EXPECTED_2 = '{\n  "Interpersonal Factors": "negative",\n  "Operational Efficiency": "negative",\n' \
             '  "Finances": "negative"\n}'


class TestTypes:
    def test_aspect_names_match_prompt_keys(self):
        assert [a.value for a in ASPECT_ORDER] == [
            'Interpersonal Factors', 'Technical Quality', 'Operational Efficiency', 'Finances',
            'Facilities/Availability',
        ]
        assert len(Aspect) == 5
        for aspect in Aspect:
            assert f'"{aspect.value}": "sentiment"' in prompts.OUTPUT

    def test_three_polarities(self):
        assert {p.value for p in Polarity} == {'positive', 'neutral', 'negative'}

    def test_none_flag_excludes_labels(self):
        with pytest.raises(ValidationError):
            AspectSentimentSet('r1', {Aspect.FINANCES: Polarity.NEGATIVE}, none_flag=True)
        assert AspectSentimentSet.of('r1', {}).none_flag


class TestPolarityToScore:
    def test_values(self):
        assert polarity_to_score(Polarity.POSITIVE) == 1
        assert polarity_to_score(Polarity.NEGATIVE) == -1
        assert polarity_to_score(Polarity.NEUTRAL) == 0

    def test_order_preserving_bijection(self):
        order = [Polarity.NEGATIVE, Polarity.NEUTRAL, Polarity.POSITIVE]
        scores = [polarity_to_score(p) for p in order]
        assert scores == sorted(scores)
        assert set(scores) == {-1, 0, 1}


class TestBuildPrompt:
    def test_text_segment(self):
        assert build_prompt('great visit').text == 'The review content is: great visit\n'

    def test_intro(self):
        assert build_prompt('x').intro.startswith('### Sentiment Scoring')

    def test_segments_are_verbatim(self):
        bundle = build_prompt('great visit')
        assert bundle.segments() == (prompts.INTRO, prompts.QUESTION,
                                     'The review content is: great visit\n', prompts.OUTPUT)
        assert bundle.render() == '\n\n'.join(bundle.segments())
        assert bundle.render().endswith('great visit\n\n\n' + prompts.OUTPUT)

    def test_anchor_phrases(self):
        bundle = build_prompt('x')
        assert 'Do NOT create new aspects.' in bundle.question
        assert bundle.question.count('### Example') == 2
        assert bundle.output.startswith('Please provide only a valid JSON response without Markdown code blocks')
        assert bundle.output.endswith('return this exact JSON response: {"None": "None"}.')

    def test_braces_are_literal(self):
        bundle = build_prompt('paid {review} and {0} dollars')
        assert bundle.text == 'The review content is: paid {review} and {0} dollars\n'

    @pytest.mark.parametrize('text', ['', '   ', '\n'])
    def test_empty_text(self, text):
        with pytest.raises(ValidationError):
            build_prompt(text)

    def test_prompt_hash_depends_on_review(self):
        assert build_prompt('a').prompt_hash() != build_prompt('b').prompt_hash()
        assert build_prompt('a').prompt_hash() == build_prompt('a').prompt_hash()


class TestParseExamples:
    def test_single_aspect(self):
        result = parse_llm_response('{"Finances": "negative"}')
        assert result.labels == {Aspect.FINANCES: Polarity.NEGATIVE}
        assert not result.none_flag

    def test_none(self):
        result = parse_llm_response('{"None": "None"}')
        assert result.none_flag
        assert result.labels == {}

    def test_unknown_aspect(self):
        with pytest.raises(ResponseParseError) as info:
            parse_llm_response('{"Parking": "positive"}')
        assert info.value.reason == 'unknown_aspect'

    @pytest.mark.parametrize('raw', ['{}', ' { } ', '```json\n{}\n```'])
    def test_empty_object_is_not_a_none_answer(self, raw):
        with pytest.raises(ResponseParseError) as info:
            parse_llm_response(raw)
        assert info.value.reason == 'empty_object'

    def test_fence_stripped_and_counted(self):
        stats = ParseStats()
        result = parse_llm_response('```json\n{"Finances":"neutral"}\n```', stats=stats)
        assert result.labels == {Aspect.FINANCES: Polarity.NEUTRAL}
        assert stats.fence_stripped == 1

    def test_strict_mode_rejects_fence(self):
        with pytest.raises(ResponseParseError):
            parse_llm_response('```json\n{"Finances":"neutral"}\n```', lenient=False)

    def test_worked_examples(self):
        assert parse_llm_response(EXPECTED_1).labels == {
            Aspect.INTERPERSONAL: Polarity.POSITIVE,
            Aspect.TECHNICAL_QUALITY: Polarity.POSITIVE,
            Aspect.FACILITIES: Polarity.POSITIVE,
        }
        assert parse_llm_response(EXPECTED_2).labels == {
            Aspect.INTERPERSONAL: Polarity.NEGATIVE,
            Aspect.OPERATIONAL_EFFICIENCY: Polarity.NEGATIVE,
            Aspect.FINANCES: Polarity.NEGATIVE,
        }


ADVERSARIAL = [
    '{"Parking": "positive"}',
    '{"interpersonal factors": "positive"}',
    '{"Interpersonal Factors ": "positive"}',
    '{"Facilities": "positive"}',
    '{"Facilities/Availability": "Positive"}',
    '{"Finances": "mixed"}',
    '{"Finances": ""}',
    '{"Finances": null}',
    '{"Finances": 1}',
    '{"Finances": ["negative"]}',
    '{"Finances": {"value": "negative"}}',
    '{"Finances": "negative", "Parking": "neutral"}',
    '{"None": "None", "Finances": "negative"}',
    '{"None": "none"}',
    '{"None": null}',
    '{"Finances": "negative"}{"Technical Quality": "positive"}',
    '{"Finances": "negative"}\n{"Finances": "negative"}',
    'The review is negative about Finances.',
    'Sure! {"Finances": "negative"}',
    '{"Finances": "negative"} Hope this helps!',
    '',
    '   ',
    '[]',
    '["Finances", "negative"]',
    '"negative"',
    'null',
    '42',
    '{"Finances": "negative",}',
    "{'Finances': 'negative'}",
    '{"Finances": "negative"',
    '{"Finances": "negative", "Finances": "positive"}',
    '```json\n{"Finances": "negative"}\n```\n```json\n{"Finances": "negative"}\n```',
    '```json\n{"Finances": "negative"}',
    '```\n```',
    '```json\nThe Finances were bad.\n```',
    '```json\n```json\n{"Finances": "negative"}\n```\n```',
    '{"Finances": "negative"} ```',
    'Here is the JSON:\n```json\n{"Finances": "negative"}\n```',
    '{"Interpersonal Factors": "positive", "Technical Quality": "great"}',
    '{"Operational Efficiency": "negative "}',
    '{"Operational efficiency": "negative"}',
    '{"Facilities / Availability": "positive"}',
    '{"Overall": "positive"}',
    '{"Wait Time": "negative"}',
    '{"Finances": "NEGATIVE"}',
    '{"Technical Quality": true}',
    '{"sentiment": {"Finances": "negative"}}',
    '{"None": "None"}{"None": "None"}',
    '{"Finances": "negative"}\n\nExplanation: the bill was high.',
    '{"NONE": "NONE"}',
]


def _valid_cases():
    cases = []
    polarities = list(Polarity)
    for aspect, polarity in itertools.product(ASPECT_ORDER, polarities):
        cases.append((json.dumps({aspect.value: polarity.value}), {aspect: polarity}, False))
    for i, pair in enumerate(itertools.combinations(ASPECT_ORDER, 2)):
        labels = {a: polarities[(i + j) % 3] for j, a in enumerate(pair)}
        cases.append((json.dumps({a.value: p.value for a, p in labels.items()}), labels, False))
    for i, triple in enumerate(itertools.combinations(ASPECT_ORDER, 3)):
        labels = {a: polarities[(i + j) % 3] for j, a in enumerate(triple)}
        # reversed key order is still valid
        cases.append((json.dumps({a.value: labels[a].value for a in reversed(triple)}), labels, False))
    every = {a: polarities[i % 3] for i, a in enumerate(ASPECT_ORDER)}
    pretty = json.dumps({a.value: p.value for a, p in every.items()}, indent=2)
    cases.append((pretty, every, False))
    cases += [
        ('{"None": "None"}', {}, False),
        ('{"None":"None"}', {}, False),
        (' {"None": "None"} \n', {}, False),
        ('```json\n{"Finances": "negative"}\n```', {Aspect.FINANCES: Polarity.NEGATIVE}, True),
        ('```\n{"Finances": "positive"}\n```', {Aspect.FINANCES: Polarity.POSITIVE}, True),
        ('```JSON\n{"Technical Quality": "neutral"}\n```', {Aspect.TECHNICAL_QUALITY: Polarity.NEUTRAL}, True),
        ('```json \n{"Finances": "neutral"}\n```', {Aspect.FINANCES: Polarity.NEUTRAL}, True),
        ('```json\n{"None": "None"}\n```', {}, True),
        ('```json\n' + pretty + '\n```', every, True),
        ('```json\r\n{"Finances": "negative"}\r\n```', {Aspect.FINANCES: Polarity.NEGATIVE}, True),
        ('\n\n{"Finances": "neutral"}\n', {Aspect.FINANCES: Polarity.NEUTRAL}, False),
        ('\t{"Facilities/Availability": "negative"}', {Aspect.FACILITIES: Polarity.NEGATIVE}, False),
        (EXPECTED_1, {Aspect.INTERPERSONAL: Polarity.POSITIVE, Aspect.TECHNICAL_QUALITY: Polarity.POSITIVE,
                      Aspect.FACILITIES: Polarity.POSITIVE}, False),
        (EXPECTED_2, {Aspect.INTERPERSONAL: Polarity.NEGATIVE, Aspect.OPERATIONAL_EFFICIENCY: Polarity.NEGATIVE,
                      Aspect.FINANCES: Polarity.NEGATIVE}, False),
    ]
    return cases


VALID = _valid_cases()


def test_fixture_sizes():
    assert len(ADVERSARIAL) == 50
    assert len(VALID) == 50
    assert len(set(ADVERSARIAL)) == 50


def test_every_adversarial_case_is_rejected():
    stats = ParseStats()
    accepted = []
    for raw in ADVERSARIAL:
        try:
            parse_llm_response(raw, 'r1', stats=stats)
            accepted.append(raw)
        except ResponseParseError:
            pass
    assert accepted == []
    assert sum(stats.to_dict()['rejected'].values()) == 50


def test_every_valid_case_is_accepted():
    stats = ParseStats()
    for raw, labels, _ in VALID:
        result = parse_llm_response(raw, 'r1', stats=stats)
        assert result.labels == labels, raw
        assert result.none_flag == (not labels)
    assert stats.accepted == 50
    assert stats.fence_stripped == sum(1 for _, _, fenced in VALID if fenced)


def test_serialize_is_canonical():
    for raw, labels, _ in VALID:
        parsed = parse_llm_response(raw)
        canonical = serialize_labels(parsed)
        assert parse_llm_response(canonical) == parsed
        assert serialize_labels(parse_llm_response(canonical)) == canonical
    assert serialize_labels(parse_llm_response('{"Finances": "neutral", "Interpersonal Factors": "positive"}')) \
        == '{"Interpersonal Factors": "positive", "Finances": "neutral"}'


class TestBackendConfig:
    def test_defaults(self):
        config = BackendConfig()
        assert config.backend_kind is BackendKind.LEXICON
        assert config.temperature == 0.0

    @pytest.mark.parametrize('kwargs', [{'max_retries': -1}, {'rate_limit': 0}, {'backend_kind': 'gpt'},
                                        {'failure_threshold': 1.5}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            BackendConfig(**kwargs)

    def test_labels(self):
        assert BackendConfig().label == 'lexicon'
        remote = BackendConfig(backend_kind='remote-llm', model_name='openai/gpt-4o-mini')
        replay = BackendConfig(backend_kind='replay-cache', model_name='openai/gpt-4o-mini')
        assert remote.label == replay.label == 'openai_gpt-4o-mini'


class TestClassify:
    @pytest.fixture
    def fake_client(self, mocker):
        def create(model, messages, temperature):
            content = messages[0]['content']
            reply = EXPECTED_1 if f'The review content is: {EXAMPLE_1}' in content else EXPECTED_2
            return mocker.MagicMock(choices=[mocker.MagicMock(message=mocker.MagicMock(content=reply))])

        client = mocker.MagicMock()
        client.chat.completions.create.side_effect = create
        return client

    @pytest.fixture
    def remote(self, tmp_path, fake_client):
        config = BackendConfig(backend_kind='remote-llm', rate_limit=1000.0)
        return RemoteLLMBackend(config, ResponseCache(tmp_path / 'cache', config.model_name),
                                client=fake_client, sleep=lambda s: None)

    def test_example_1(self, remote):
        record = classify(review('ex1', text=EXAMPLE_1), remote)
        assert record.sentiments.labels == {
            Aspect.INTERPERSONAL: Polarity.POSITIVE,
            Aspect.TECHNICAL_QUALITY: Polarity.POSITIVE,
            Aspect.FACILITIES: Polarity.POSITIVE,
        }
        assert record.prompt_hash == build_prompt(EXAMPLE_1).prompt_hash()

    def test_example_2(self, remote):
        record = classify(review('ex2', text=EXAMPLE_2), remote)
        assert record.sentiments.labels == {
            Aspect.INTERPERSONAL: Polarity.NEGATIVE,
            Aspect.OPERATIONAL_EFFICIENCY: Polarity.NEGATIVE,
            Aspect.FINANCES: Polarity.NEGATIVE,
        }

    def test_prompt_sent_verbatim(self, remote, fake_client):
        classify(review('ex1', text=EXAMPLE_1), remote)
        kwargs = fake_client.chat.completions.create.call_args.kwargs
        assert kwargs['messages'] == [{'role': 'user', 'content': build_prompt(EXAMPLE_1).render()}]
        assert kwargs['temperature'] == 0.0

    def test_lexicon_gibberish_is_none(self):
        record = classify(review('r1', text='asdf qwerty'), LexiconBackend(BackendConfig()))
        assert record.sentiments.none_flag
        assert record.backend == 'lexicon'

    def test_textless_review(self):
        with pytest.raises(ValidationError):
            classify(review('r1', text='  '), LexiconBackend(BackendConfig()))
