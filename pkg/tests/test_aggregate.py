import numpy as np
import pytest

from factories import facility, profile, review, sentiments
from urgentcare_absa.core.absa import ASPECT_ORDER, Aspect, Polarity
from urgentcare_absa.core.aggregate import (PROFILE_COLUMNS, FacilityAspectProfile, FilterPolicy, apply_filter,
                                            box_stats, facility_profiles, profiles_frame, region_summary)
from urgentcare_absa.core.corpus import Region
from urgentcare_absa.utils import ConfigError, ValidationError

pytestmark = pytest.mark.unit

I, T, O, F, A = ASPECT_ORDER
POS, NEG, NEU = Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL


@pytest.fixture
def corpus():
    reviews = [
        review('r1', 'f1', 5, 'a'),
        review('r2', 'f1', 3, 'b'),
        review('r3', 'f1', 4, 'c'),
        review('r4', 'f2', 2, 'd'),
        review('r5', 'f2', 1, None),
    ]
    labels = {
        'r1': sentiments('r1', {I: POS}),
        'r2': sentiments('r2', {I: NEG, F: NEU}),
        'r3': sentiments('r3'),
        'r4': sentiments('r4', {O: NEG}),
    }
    facilities = [facility('f1'), facility('f2', address='9 Kennedy Blvd, Tampa, FL 33602'),
                  facility('f3')]
    return reviews, labels, facilities


class TestFacilityProfiles:
    def test_means_and_counts(self, corpus):
        reviews, labels, facilities = corpus
        profiles = {p.facility_id: p for p in facility_profiles(reviews, labels, facilities)}
        f1 = profiles['f1']
        assert f1.mean_rating == pytest.approx(4.0)
        assert f1.n_text_reviews == 3
        assert f1.aspect_mean == {I: 0.0, F: 0.0}
        assert f1.count(I) == 2
        assert f1.count(F) == 1
        assert f1.count(T) == 0
        assert profiles['f2'].aspect_mean == {O: -1.0}
        assert profiles['f2'].region is Region.FL

    def test_textless_reviews_feed_only_the_all_rating(self, corpus):
        reviews, labels, facilities = corpus
        text_only = [r for r in reviews if r.has_text]
        profiles = {p.facility_id: p for p in facility_profiles(text_only, labels, facilities, all_reviews=reviews)}
        assert profiles['f2'].mean_rating == 2.0
        assert profiles['f2'].mean_rating_all == pytest.approx(1.5)
        assert profiles['f2'].n_reviews_all == 2

    def test_facility_without_text_is_omitted(self, corpus):
        reviews, labels, facilities = corpus
        result = facility_profiles(reviews, labels, facilities)
        assert [p.facility_id for p in result] == ['f1', 'f2']
        assert result.omitted_no_text == 1

    def test_unclassified_reviews_are_excluded(self, corpus):
        reviews, labels, facilities = corpus
        del labels['r2']
        result = facility_profiles(reviews, labels, facilities)
        f1 = next(p for p in result if p.facility_id == 'f1')
        assert result.unclassified_reviews == 1
        assert f1.mean_rating == pytest.approx(4.5)
        assert f1.aspect_mean == {I: 1.0}

    def test_dangling_sentiment(self, corpus):
        reviews, labels, _ = corpus
        labels['ghost'] = sentiments('ghost', {I: POS})
        with pytest.raises(ValidationError):
            facility_profiles(reviews, labels)

    def test_means_stay_in_range(self, corpus):
        reviews, labels, facilities = corpus
        for p in facility_profiles(reviews, labels, facilities):
            assert 1 <= p.mean_rating <= 5
            assert all(-1 <= m <= 1 for m in p.aspect_mean.values())
            assert all(p.count(a) <= p.n_text_reviews for a in ASPECT_ORDER)

    def test_mean_defined_iff_count(self):
        with pytest.raises(ValidationError):
            FacilityAspectProfile('f1', 4.0, {I: 0.5}, {I: 0}, 3)
        with pytest.raises(ValidationError):
            FacilityAspectProfile('f1', 4.0, {}, {I: 2}, 3)

    def test_record_preserves_undefined_means(self):
        p = profile('f1', means={I: 0.5}, counts={a: (4 if a is I else 0) for a in ASPECT_ORDER})
        restored = FacilityAspectProfile.from_record(p.to_record())
        assert restored == p
        assert p.to_record()['finances_mean'] is None


class TestFilterPolicy:
    def test_uniform(self):
        assert FilterPolicy.from_config(10) == FilterPolicy.uniform(10)

    def test_mapping_defaults_to_zero(self):
        policy = FilterPolicy.from_config({'Finances': 5, 'interpersonal': 3})
        assert policy.threshold(F) == 5
        assert policy.threshold(I) == 3
        assert policy.threshold(T) == 0

    @pytest.mark.parametrize('value', [-1, {'Finances': -2}, 'many', {'Parking': 3}])
    def test_invalid(self, value):
        with pytest.raises(ConfigError):
            FilterPolicy.from_config(value)

    def test_inclusive_threshold(self):
        policy = FilterPolicy.uniform(10)
        assert policy.admits(profile('a', count=10))
        assert not policy.admits(profile('b', count=9))

    def test_zero_admits_missing_aspect(self):
        sparse = profile('a', means={I: 0.5}, counts={I: 3})
        assert FilterPolicy.uniform(0).admits(sparse)
        assert not FilterPolicy.uniform(1).admits(sparse)

    def test_with_threshold(self):
        relaxed = FilterPolicy.uniform(10).with_threshold(Aspect.FINANCES, 0)
        assert relaxed.to_dict()['Finances'] == 0
        assert relaxed.to_dict()['Technical Quality'] == 10

    def test_filter_is_monotone(self):
        profiles = [profile(f"f{i}", count=i) for i in range(1, 20)]
        previous = None
        for threshold in range(0, 22, 3):
            kept = {p.facility_id for p in apply_filter(profiles, FilterPolicy.uniform(threshold))}
            if previous is not None:
                assert kept <= previous
            previous = kept
        assert len(apply_filter(profiles, FilterPolicy.uniform(10))) == 10


class TestBoxStats:
    def test_outlier(self):
        stats = box_stats([1, 2, 3, 4, 100])
        assert (stats.q1, stats.median, stats.q3) == (2.0, 3.0, 4.0)
        assert stats.upper_fence == 7.0
        assert stats.outliers == (100.0,)
        assert (stats.whisker_low, stats.whisker_high) == (1.0, 4.0)

    def test_matches_numpy(self):
        values = np.random.default_rng(3).normal(size=37)
        stats = box_stats(values)
        q1, q3 = np.percentile(values, [25, 75])
        assert stats.q1 == pytest.approx(q1)
        assert stats.q3 == pytest.approx(q3)
        assert stats.n == 37

    def test_empty(self):
        assert box_stats([]) is None

    def test_single_value(self):
        stats = box_stats([0.4])
        assert stats.iqr == 0.0
        assert stats.outliers == ()


class TestRegionSummary:
    def test_review_weighted_means(self, corpus):
        reviews, labels, facilities = corpus
        profiles = facility_profiles(reviews, labels, facilities)
        summaries = {s.region: s for s in region_summary(profiles, reviews, labels)}
        dmv = summaries[Region.DMV]
        assert dmv.n_facilities == 1
        assert dmv.n_reviews == 3
        assert dmv.aspect_mean[I] == 0.0
        assert dmv.aspect_count[I] == 2
        assert dmv.aspect_mean[T] is None
        assert summaries[Region.FL].mean_rating == 2.0

    def test_boxes_use_facility_means(self):
        profiles = [profile('a', means={I: 1.0}, counts={I: 10}), profile('b', means={I: -1.0}, counts={I: 2})]
        reviews = [review(f"a{i}", 'a') for i in range(10)] + [review(f"b{i}", 'b') for i in range(2)]
        labels = {r.review_id: sentiments(r.review_id, {I: POS if r.facility_id == 'a' else NEG}) for r in reviews}
        (summary,) = region_summary(profiles, reviews, labels)
        assert summary.aspect_mean[I] == pytest.approx(8 / 12)
        assert summary.boxplots[I].median == 0.0
        assert summary.to_dict()['aspects']['Finances']['facility_means_box'] is None


def test_profiles_frame_columns():
    frame = profiles_frame([profile('a'), profile('b', means={I: 0.2}, counts={I: 5})])
    assert list(frame.columns) == PROFILE_COLUMNS
    assert frame.loc[1, 'interpersonal_count'] == 5
    assert frame['facility_id'].tolist() == ['a', 'b']
