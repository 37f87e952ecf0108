import logging

import pytest
import yaml
from click.testing import CliRunner

from factories import POIS, REVIEWS, write_jsonl
from urgentcare_absa.config import ConfigManager
from urgentcare_absa.core.synthetic import SyntheticConfig, generate, write_corpus


@pytest.fixture(autouse=True)
def _detach_log_handlers():
    yield
    logger = logging.getLogger('urgentcare_absa')
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def corpus_files(tmp_path):
    """The five-POI, seven-review fixture used by ingest tests."""
    return {
        'pois': write_jsonl(tmp_path / 'pois.jsonl', POIS),
        'reviews': write_jsonl(tmp_path / 'reviews.jsonl', REVIEWS),
    }


@pytest.fixture
def config_file(tmp_path, corpus_files):
    path = tmp_path / 'urgentcare-absa.yaml'
    path.write_text(yaml.safe_dump({
        'inputs': {'reviews': ['reviews.jsonl'], 'pois': 'pois.jsonl'},
        'output_dir': 'run',
        'backend': {'max_workers': 1},
    }), encoding='utf-8')
    return path


@pytest.fixture
def config_manager(config_file):
    return ConfigManager(config_file)


@pytest.fixture
def synthetic_dir(tmp_path):
    """A 20-facility synthetic corpus with its ready-to-run config.yaml."""
    config = SyntheticConfig(seed=7, n_facilities=20, n_annotated=120, n_decoys=4)
    out = tmp_path / 'synthetic'
    write_corpus(generate(config), out, config)
    return out
