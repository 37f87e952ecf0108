import httpx
import pytest
from openai import APIConnectionError, APITimeoutError

from factories import review
from urgentcare_absa.core.absa import Aspect, BackendConfig, ParseStats, Polarity, build_prompt
from urgentcare_absa.core.backends import (LexiconBackend, RateLimiter, RemoteLLMBackend, ReplayCacheBackend,
                                           ResponseCache, cache_key, create_backend)
from urgentcare_absa.core.classifier import classify, classify_batch
from urgentcare_absa.utils import BackendError, ConfigError, ResponseParseError

pytestmark = pytest.mark.unit

REQUEST = httpx.Request('POST', 'https://openrouter.test/api/v1/chat/completions')


def completion(mocker, content):
    return mocker.MagicMock(choices=[mocker.MagicMock(message=mocker.MagicMock(content=content))])


@pytest.fixture
def remote_config():
    return BackendConfig(backend_kind='remote-llm', rate_limit=1000.0, max_retries=3)


@pytest.fixture
def sleeps():
    return []


@pytest.fixture
def make_remote(tmp_path, sleeps):
    def make(config, client):
        cache = ResponseCache(tmp_path / 'cache', config.model_name)
        return RemoteLLMBackend(config, cache, client=client, sleep=sleeps.append)
    return make


def test_cache_key_covers_all_parts():
    base = cache_key('m', 'r1', 'h')
    assert base != cache_key('m2', 'r1', 'h')
    assert base != cache_key('m', 'r2', 'h')
    assert base != cache_key('m', 'r1', 'h2')
    assert base == cache_key('m', 'r1', 'h')


def test_cache_layout(tmp_path):
    cache = ResponseCache(tmp_path, 'openai/gpt-4o-mini')
    key = cache_key('openai/gpt-4o-mini', 'r1', 'abc')
    cache.put(key, {'response': '{"None": "None"}'})
    assert cache.path(key) == tmp_path / 'openai_gpt-4o-mini' / key[:2] / f"{key}.json"
    assert cache.get(key) == {'response': '{"None": "None"}'}
    assert cache.get(cache_key('openai/gpt-4o-mini', 'r2', 'abc')) is None


class TestRemoteBackend:
    def test_response_is_cached_before_parsing(self, mocker, make_remote, remote_config, tmp_path):
        client = mocker.MagicMock()
        client.chat.completions.create.return_value = completion(mocker, 'I cannot answer that.')
        backend = make_remote(BackendConfig(backend_kind='remote-llm', rate_limit=1000.0, max_retries=0), client)
        with pytest.raises(ResponseParseError):
            classify(review('r1', text='the bill was too high'), backend)

        key = cache_key(remote_config.model_name, 'r1', build_prompt('the bill was too high').prompt_hash())
        entry = backend.cache.get(key)
        assert entry['response'] == 'I cannot answer that.'
        assert entry['temperature'] == 0.0

    def test_unparseable_response_is_retried(self, mocker, make_remote, remote_config):
        client = mocker.MagicMock()
        client.chat.completions.create.side_effect = [
            completion(mocker, 'Sure thing!'),
            completion(mocker, '{"Finances": "negative"}'),
        ]
        backend = make_remote(remote_config, client)
        record = classify(review('r1', text='the bill was too high'), backend)
        assert record.sentiments.labels == {Aspect.FINANCES: Polarity.NEGATIVE}
        assert backend.remote_calls == 2

    def test_cache_hit_skips_network(self, mocker, make_remote, remote_config):
        client = mocker.MagicMock()
        client.chat.completions.create.return_value = completion(mocker, '{"Finances": "negative"}')
        first = make_remote(remote_config, client)
        classify(review('r1', text='the bill was too high'), first)

        offline = mocker.MagicMock()
        offline.chat.completions.create.side_effect = AssertionError("network used")
        second = make_remote(remote_config, offline)
        stats = ParseStats()
        prompt = build_prompt('the bill was too high')
        outcome = second.classify(review('r1', text='the bill was too high'), prompt, stats)
        assert outcome.cached
        assert outcome.sentiments.labels == {Aspect.FINANCES: Polarity.NEGATIVE}
        assert second.remote_calls == 0

    def test_transient_error_is_retried_with_backoff(self, mocker, make_remote, remote_config, sleeps):
        client = mocker.MagicMock()
        client.chat.completions.create.side_effect = [
            APIConnectionError(request=REQUEST),
            APITimeoutError(request=REQUEST),
            completion(mocker, '{"None": "None"}'),
        ]
        backend = make_remote(remote_config, client)
        record = classify(review('r1', text='hello there'), backend)
        assert record.sentiments.none_flag
        assert backend.remote_calls == 3
        assert backend.retries == 2
        backoffs = [s for s in sleeps if s >= 0.5]
        assert len(backoffs) == 2
        assert 1.0 <= backoffs[0] <= 1.25
        assert 2.0 <= backoffs[1] <= 2.5

    def test_retries_exhausted(self, mocker, make_remote, sleeps):
        client = mocker.MagicMock()
        client.chat.completions.create.side_effect = APIConnectionError(request=REQUEST)
        backend = make_remote(BackendConfig(backend_kind='remote-llm', rate_limit=1000.0, max_retries=2), client)
        with pytest.raises(BackendError) as info:
            classify(review('r1', text='hello there'), backend)
        assert info.value.review_id == 'r1'
        assert client.chat.completions.create.call_count == 3
        assert backend.retries == 2

    @pytest.mark.parametrize('choices', [[], None])
    def test_response_without_choices(self, mocker, make_remote, remote_config, choices):
        client = mocker.MagicMock()
        client.chat.completions.create.return_value = mocker.MagicMock(choices=choices)
        backend = make_remote(remote_config, client)
        with pytest.raises(BackendError, match='no choices') as info:
            classify(review('r1', text='hello there'), backend)
        assert info.value.review_id == 'r1'

    def test_empty_choices_fail_single_reviews(self, mocker, make_remote, remote_config):
        client = mocker.MagicMock()
        client.chat.completions.create.return_value = mocker.MagicMock(choices=[])
        backend = make_remote(remote_config, client)
        reviews = [review(f"r{i}", text=f"visit {i}") for i in range(3)]
        result = classify_batch(reviews, backend, max_workers=2, failure_threshold=1.0)
        assert result.summary()['failed'] == 3
        assert {f.reason for f in result.failures.values()} == {'backend'}

    @pytest.mark.parametrize('attempt', [0, 1, 2, 3])
    def test_backoff_range(self, mocker, make_remote, remote_config, attempt):
        backend = make_remote(remote_config, mocker.MagicMock())
        for _ in range(20):
            delay = backend._backoff(attempt)
            assert 2 ** attempt <= delay <= 1.25 * 2 ** attempt

    def test_missing_api_key(self, tmp_path, monkeypatch, remote_config):
        monkeypatch.delenv('OPENROUTER_API_KEY', raising=False)
        with pytest.raises(ConfigError, match='OPENROUTER_API_KEY'):
            RemoteLLMBackend(remote_config, ResponseCache(tmp_path, remote_config.model_name))

    def test_decoding_parameters(self, mocker, make_remote, remote_config):
        backend = make_remote(remote_config, mocker.MagicMock())
        assert backend.decoding_parameters() == {'model': 'openai/gpt-4o-mini', 'temperature': 0.0}


class TestReplayBackend:
    def test_miss(self, tmp_path):
        config = BackendConfig(backend_kind='replay-cache')
        backend = ReplayCacheBackend(config, ResponseCache(tmp_path, config.model_name))
        with pytest.raises(BackendError, match='no cached response'):
            classify(review('r1', text='hello'), backend)

    def test_hit(self, tmp_path):
        config = BackendConfig(backend_kind='replay-cache')
        cache = ResponseCache(tmp_path, config.model_name)
        key = cache_key(config.model_name, 'r1', build_prompt('hello').prompt_hash())
        cache.put(key, {'response': '```json\n{"Technical Quality": "positive"}\n```'})
        record = classify(review('r1', text='hello'), ReplayCacheBackend(config, cache))
        assert record.sentiments.labels == {Aspect.TECHNICAL_QUALITY: Polarity.POSITIVE}
        assert record.backend == 'openai_gpt-4o-mini'


def test_rate_limiter_spacing():
    slept = []
    limiter = RateLimiter(2.0, clock=lambda: 0.0, sleep=slept.append)
    for _ in range(3):
        limiter.wait()
    assert slept == [0.5, 1.0]


def test_rate_limiter_idle_clock_does_not_sleep():
    slept = []
    ticks = iter([0.0, 10.0, 20.0])
    limiter = RateLimiter(2.0, clock=lambda: next(ticks), sleep=slept.append)
    for _ in range(3):
        limiter.wait()
    assert slept == []


class TestCreateBackend:
    def test_lexicon(self, tmp_path):
        assert isinstance(create_backend(BackendConfig(), tmp_path), LexiconBackend)

    def test_replay(self, tmp_path):
        backend = create_backend(BackendConfig(backend_kind='replay-cache'), tmp_path)
        assert isinstance(backend, ReplayCacheBackend)
        assert backend.cache.root == tmp_path / 'openai_gpt-4o-mini'

    def test_remote_with_client(self, mocker, tmp_path):
        backend = create_backend(BackendConfig(backend_kind='remote-llm'), tmp_path, client=mocker.MagicMock())
        assert isinstance(backend, RemoteLLMBackend)

    def test_remote_without_key(self, monkeypatch, tmp_path):
        monkeypatch.delenv('OPENROUTER_API_KEY', raising=False)
        with pytest.raises(ConfigError):
            create_backend(BackendConfig(backend_kind='remote-llm'), tmp_path)


def test_fault_injection_over_a_batch(mocker, make_remote, remote_config):
    reviews = [review(f"r{i:03d}", text=f"visit number {i}") for i in range(100)]
    flaky = {'visit number 17', 'visit number 64'}
    failed_once = set()

    def create(model, messages, temperature):
        content = messages[0]['content']
        for text in flaky - failed_once:
            if f"The review content is: {text}\n" in content:
                failed_once.add(text)
                raise APIConnectionError(request=REQUEST)
        return completion(mocker, '{"None": "None"}')

    client = mocker.MagicMock()
    client.chat.completions.create.side_effect = create
    backend = make_remote(remote_config, client)
    result = classify_batch(reviews, backend, max_workers=4)
    summary = result.summary()
    assert summary['classified'] == 100
    assert summary['failed'] == 0
    assert summary['retries'] == 2
    assert summary['remote_calls'] == 102
    assert failed_once == flaky
