import json

import pytest

from urgentcare_absa.config import ConfigManager
from urgentcare_absa.main import cli
from urgentcare_absa.pipeline import CheckOutcome, run_e2e_check
from urgentcare_absa.utils import PropertyCheckError

pytestmark = [pytest.mark.slow, pytest.mark.integration]


def test_e2e_check_passes(runner, tmp_path):
    result = runner.invoke(cli, ['--log-level', 'error', '--output-dir', str(tmp_path / 'run'),
                                 'e2e-check', '--work-dir', str(tmp_path / 'e2e'), '--format', 'json'])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report['passed']
    names = [c['name'] for c in report['checks']]
    assert names[:2] == ['byte-identical reruns', 'lexicon labels match generated labels']
    assert 'interpersonal recovered' in names
    assert 'Finances not significant' in names


def test_e2e_check_with_sensitivity(tmp_path):
    config_manager = ConfigManager(None)
    config_manager.set('output_dir', str(tmp_path / 'run'))
    report = run_e2e_check(config_manager, work_dir=tmp_path / 'e2e', sensitivity=True)
    by_name = {c['name']: c for c in report['checks']}
    assert by_name['relaxed sample larger']['passed']
    assert by_name['interpersonal significant (strict)']['passed']
    assert by_name['interpersonal significant (relaxed)']['passed']
    assert (tmp_path / 'e2e' / 'sensitivity' / 'run' / 'fits' / 'sensitivity.json').exists()


def test_failed_check_exits_1(runner, tmp_path, mocker):
    mocker.patch('urgentcare_absa.pipeline._recovery_checks', return_value=[])
    mocker.patch('urgentcare_absa.pipeline._label_agreement',
                 return_value=CheckOutcome('lexicon labels match generated labels', False, '0/1 reviews'))
    config = tmp_path / 'small.yaml'
    config.write_text('synthesize:\n  n_facilities: 20\n  n_annotated: 50\n', encoding='utf-8')
    result = runner.invoke(cli, ['--config', str(config), '--log-level', 'error', 'e2e-check',
                                 '--work-dir', str(tmp_path / 'e2e')])
    assert result.exit_code == 1
    assert 'lexicon labels match generated labels' in result.output


def test_property_error_exit_code():
    assert PropertyCheckError('x').exit_code == 1
