import numpy as np
import pytest

from factories import profile, review, sentiments
from urgentcare_absa.core.absa import ASPECT_ORDER, Polarity
from urgentcare_absa.core.aggregate import region_summary
from urgentcare_absa.core.evaluation import FlatRow, score
from urgentcare_absa.core.reporting import (boxplot_payload, correlation_payload, facility_features, format_comparison,
                                            format_eval_report, format_fit_table, format_vif_table)
from urgentcare_absa.core.stats import CorrelationMatrix, CorrelationResult, DesignMatrix, VifReport, ols_fit
from urgentcare_absa.utils import ValidationError

pytestmark = pytest.mark.unit

I = ASPECT_ORDER[0]
POS, NEG = Polarity.POSITIVE, Polarity.NEGATIVE


@pytest.fixture
def fits():
    rng = np.random.default_rng(2)
    x = np.linspace(0.0, 1.0, 40)
    z = rng.normal(size=40)
    y = 3.0 * x + rng.normal(scale=0.05, size=40)
    small = ols_fit(DesignMatrix.from_columns({'Signal': x}), y)
    large = ols_fit(DesignMatrix.from_columns({'Signal': x, 'Noise': z}), y)
    return {'(1)': small, '(2)': large}


class TestFitTable:
    def test_rows_and_footer(self, fits):
        table = format_fit_table(fits)
        lines = table.splitlines()
        assert lines[0] == 'Dependent variable: mean rating'
        assert lines[-1] == 'Note: ** p < 0.05, *** p < 0.001'
        labels = [line.split()[0] for line in lines if line and not line.startswith(('-', ' '))]
        assert labels[1:4] == ['Intercept', 'Signal', 'Noise']
        for stat in ('R²', 'Adj. R²', 'F statistic', 'Observations'):
            assert any(line.startswith(stat) for line in lines)

    def test_stars_and_standard_errors(self, fits):
        lines = format_fit_table(fits).splitlines()
        signal = next(i for i, line in enumerate(lines) if line.startswith('Signal'))
        assert lines[signal].count('***') == 2
        assert '(' in lines[signal + 1]

    def test_missing_cells_are_blank(self, fits):
        lines = format_fit_table(fits).splitlines()
        noise = next(line for line in lines if line.startswith('Noise'))
        assert len(noise.split()) == 2

    def test_observations(self, fits):
        line = next(line for line in format_fit_table(fits).splitlines() if line.startswith('Observations'))
        assert line.split()[1:] == ['40', '40']

    def test_empty(self):
        with pytest.raises(ValidationError):
            format_fit_table({})


def test_vif_table_prints_inf():
    table = format_vif_table(VifReport({'A': 1.5, 'B': float('inf')}, ('B',)))
    assert 'A' in table and '1.50' in table
    assert table.splitlines()[-1].split() == ['B', 'inf']


class TestFacilityFeatures:
    def test_points_and_properties(self):
        collection = facility_features([profile('b', latitude=38.8, longitude=-77.1), profile('a')])
        assert collection.is_valid
        assert [f['id'] for f in collection['features']] == ['a', 'b']
        first = collection['features'][0]
        assert first['geometry']['coordinates'] == [-77.0, 38.9]
        assert first['properties']['region'] == 'DMV'
        assert first['properties']['interpersonal_count'] == 10

    def test_skips_missing_coordinates(self):
        collection = facility_features([profile('a'), profile('b', latitude=None, longitude=None)])
        assert [f['id'] for f in collection['features']] == ['a']

    def test_undefined_mean_is_null(self):
        sparse = profile('a', means={I: 0.5}, counts={I: 4})
        props = facility_features([sparse])['features'][0]['properties']
        assert props['finances_mean'] is None
        assert props['finances_count'] == 0


def test_boxplot_payload_accepts_persisted_summaries():
    profiles = [profile('a', means={I: 1.0}, counts={I: 2}), profile('b', means={I: -1.0}, counts={I: 1})]
    reviews = [review('a1', 'a'), review('a2', 'a'), review('b1', 'b')]
    labels = {r.review_id: sentiments(r.review_id, {I: POS if r.facility_id == 'a' else NEG}) for r in reviews}
    summaries = region_summary(profiles, reviews, labels)
    payload = boxplot_payload(summaries)
    assert payload == boxplot_payload([s.to_dict() for s in summaries])
    assert payload['DMV']['Interpersonal Factors']['median'] == 0.0
    assert payload['DMV']['Finances'] is None


def eval_report(correct):
    rows = [FlatRow(f"r{i}", I, POS, POS if i < correct else None) for i in range(4)]
    rows.append(FlatRow('n1', I, NEG, NEG))
    return score(rows)


def test_eval_report_text():
    text = format_eval_report('lexicon', eval_report(3))
    assert text.startswith('Backend: lexicon\nInstances: 5\nAccuracy: 0.8000\n')
    assert 'Confusion (rows = predicted, columns = gold)' in text
    absent = next(line for line in text.splitlines() if line.startswith('absent'))
    assert absent.split()[1:] == ['1', '0', '0']


def test_comparison_is_sorted_by_label():
    text = format_comparison({'zeta': eval_report(1), 'alpha': eval_report(4)})
    rows = text.splitlines()[2:]
    assert [row.split()[0] for row in rows] == ['alpha', 'zeta']
    assert rows[0].split()[1] == '1.0000'


def test_comparison_needs_reports():
    with pytest.raises(ValidationError):
        format_comparison({})


def test_correlation_payload_keeps_missing_cells():
    one, half = CorrelationResult(1.0, 0.0, 5), CorrelationResult(0.5, 0.2, 5)
    matrix = CorrelationMatrix(('Finances', 'Rating'), ((one, None), (half, one)), 5)
    payload = correlation_payload({'ALL': matrix})
    assert payload == {'ALL': {'variables': ['Finances', 'Rating'], 'n': 5,
                               'r': [[1.0, None], [0.5, 1.0]], 'p': [[0.0, None], [0.2, 0.0]]}}
