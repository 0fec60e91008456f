import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from tpa_yield.errors import DegenerateInput, InvalidArgument
from tpa_yield.schema import CONTINUOUS, Dataset, FeatureSchema, Record, synth_generate
from tpa_yield.stats import (
    kruskal_wallis_pvalue,
    midranks,
    pearson_pvalue,
    rank_features_logistic,
    significance_table,
)


def permutation_pvalue(x, y, draws=200_000, seed=0):
    """Two-sided Monte-Carlo permutation p-value for zero correlation."""
    rng = np.random.default_rng(seed)
    xc = (x - x.mean()) / np.linalg.norm(x - x.mean())
    yc = (y - y.mean()) / np.linalg.norm(y - y.mean())
    r = xc @ yc
    idx = rng.permuted(np.tile(np.arange(len(y)), (draws, 1)), axis=1)
    hits = np.sum(np.abs(yc[idx] @ xc) >= abs(r) - 1e-12)
    return (hits + 1) / (draws + 1)


def pearson_sample(i):
    rng = np.random.default_rng(100 + i)
    x = rng.normal(size=12)
    return x, 0.25 * i * x + rng.normal(size=12)


def brute_force_h(groups):
    """H by counting: rank = 1 + #smaller + (#equal - 1) / 2, then tie correction."""
    pooled = [v for g in groups for v in g]
    N = len(pooled)
    rank = {}
    for v in set(pooled):
        smaller = sum(1 for u in pooled if u < v)
        equal = sum(1 for u in pooled if u == v)
        rank[v] = mpmath.mpf(1) + smaller + mpmath.mpf(equal - 1) / 2
    h = mpmath.mpf(0)
    for g in groups:
        h += sum(rank[v] for v in g) ** 2 / len(g)
    h = mpmath.mpf(12) / (N * (N + 1)) * h - 3 * (N + 1)
    ties = sum(pooled.count(v) ** 3 - pooled.count(v) for v in set(pooled))
    return h / (1 - mpmath.mpf(ties) / (N ** 3 - N))


KW_GROUP_SETS = [
    [[1, 2, 3], [4, 5, 6], [7, 8, 9]],
    [[1, 1, 2], [2, 3, 3]],
    [[5.5, 2.1, 7.0, 2.1], [3.3, 9.9], [1.0, 2.1, 8.8]],
    [[0, 0, 0, 1], [1, 1, 2, 2], [2, 3]],
    [[10, 20], [30, 40], [50, 60], [70, 80]],
    [[1.5, 2.5, 3.5, 4.5, 5.5], [2, 3, 4, 5, 6]],
    [[7, 7, 7], [7, 8], [6, 7]],
    [[-3, -1, 0.5], [0.5, 0.5, 2], [4, -3]],
    [[1, 9, 2, 8], [3, 7, 4, 6], [5, 5]],
    [[100.0], [1.0, 2.0], [50.0, 60.0, 70.0]],
]


class TestPearson:
    def test_perfect_correlation(self):
        x = np.arange(10.0)
        r, p = pearson_pvalue(x, 3 * x + 1)
        assert r == pytest.approx(1.0)
        assert p < 1e-10

    def test_zero_correlation(self):
        x = np.arange(20.0) - 9.5
        y = x ** 2  # symmetric about the mean of x, so orthogonal to it
        r, p = pearson_pvalue(x, y)
        assert abs(r) < 1e-14
        assert p == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("i", range(5))
    def test_matches_permutation_oracle(self, i):
        x, y = pearson_sample(i)
        assert abs(pearson_pvalue(x, y)[1] - permutation_pvalue(x, y)) < 0.01

    @pytest.mark.parametrize("i", range(5))
    def test_matches_high_precision_t_tail(self, i):
        x, y = pearson_sample(i)
        r, p = pearson_pvalue(x, y)
        df = len(x) - 2
        t = mpmath.mpf(abs(r)) * mpmath.sqrt(df / (1 - mpmath.mpf(r) ** 2))
        # two-sided tail of Student t by direct numerical integration of its density
        dens = lambda u: mpmath.gamma((df + 1) / mpmath.mpf(2)) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / mpmath.mpf(2))) * (1 + u * u / df) ** (-(df + 1) / mpmath.mpf(2))
        oracle = 2 * mpmath.quad(dens, [t, mpmath.inf])
        assert abs(p - float(oracle)) < 1e-12

    def test_constant_vector(self):
        with pytest.raises(DegenerateInput):
            pearson_pvalue([1, 1, 1, 1], [1, 2, 3, 4])

    def test_too_short(self):
        with pytest.raises(DegenerateInput):
            pearson_pvalue([1, 2], [2, 1])

    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 100), shift=st.floats(-100, 100))
    def test_symmetric_and_affine_invariant(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=15)
        y = 0.5 * x + rng.normal(size=15)
        r, p = pearson_pvalue(x, y)
        r2, p2 = pearson_pvalue(y, x)
        r3, p3 = pearson_pvalue(scale * x + shift, y)
        assert r2 == pytest.approx(r, abs=1e-12) and p2 == pytest.approx(p, abs=1e-10)
        assert r3 == pytest.approx(r, abs=1e-9) and p3 == pytest.approx(p, abs=1e-8)
        assert 0.0 <= p <= 1.0


class TestKruskalWallis:
    def test_all_equal(self):
        assert kruskal_wallis_pvalue([[2, 2], [2, 2, 2], [2]]) == (0.0, 1.0)

    def test_separated_groups(self):
        h, p = kruskal_wallis_pvalue([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        assert h == pytest.approx(7.2, abs=1e-12)
        # chi-square(2) upper tail is exp(-h/2)
        assert p == pytest.approx(float(mpmath.exp(-mpmath.mpf("3.6"))), abs=1e-14)

    @pytest.mark.parametrize("groups", KW_GROUP_SETS)
    def test_matches_brute_force(self, groups):
        h, p = kruskal_wallis_pvalue(groups)
        oracle_h = brute_force_h(groups)
        assert h == pytest.approx(float(oracle_h), rel=1e-12, abs=1e-12)
        k = len(groups)
        oracle_p = mpmath.gammainc(mpmath.mpf(k - 1) / 2, oracle_h / 2, mpmath.inf, regularized=True)
        assert p == pytest.approx(float(oracle_p), abs=1e-12)

    def test_matches_scipy(self):
        for groups in KW_GROUP_SETS:
            if len(set(v for g in groups for v in g)) > 1:
                ref = sps.kruskal(*groups)
                h, p = kruskal_wallis_pvalue(groups)
                assert h == pytest.approx(ref.statistic, rel=1e-12)
                assert p == pytest.approx(ref.pvalue, abs=1e-12)

    def test_same_distribution_not_significant(self):
        rng = np.random.default_rng(42)
        a, b = rng.normal(size=30), rng.normal(size=30)
        _, p = kruskal_wallis_pvalue([a, b])
        assert p > 0.05
        # permutation oracle on H agrees it is unremarkable
        pooled = np.concatenate([a, b])
        h0 = kruskal_wallis_pvalue([a, b])[0]
        perm = rng.permuted(np.tile(pooled, (4000, 1)), axis=1)
        hs = [kruskal_wallis_pvalue([row[:30], row[30:]])[0] for row in perm]
        assert np.mean(np.array(hs) >= h0 - 1e-12) > 0.05

    @pytest.mark.parametrize("groups", [[[1, 2, 3]], [[1, 2], []], [[1], [2]]])
    def test_bad_groups(self, groups):
        with pytest.raises(InvalidArgument):
            kruskal_wallis_pvalue(groups)

    @given(seed=st.integers(0, 2**32 - 1), transform=st.sampled_from([np.exp, np.cbrt, lambda v: 3 * v - 7]))
    def test_monotone_transform_invariance(self, seed, transform):
        rng = np.random.default_rng(seed)
        groups = [np.round(rng.normal(m, 1, size=6), 1) for m in (0, 0.5, 1)]
        h, p = kruskal_wallis_pvalue(groups)
        h2, p2 = kruskal_wallis_pvalue([transform(g) for g in groups])
        assert h2 == pytest.approx(h, rel=1e-9, abs=1e-12)
        assert 0.0 <= p2 <= 1.0 and p2 == pytest.approx(p, abs=1e-12)

    def test_midranks(self):
        np.testing.assert_array_equal(midranks([10, 20, 10, 30]), [1.5, 3, 1.5, 4])


def _two_feature_dataset(x_temp, x_noise, y):
    schema = (FeatureSchema("temperature_C", CONTINUOUS, "°C", (-1e9, 1e9)),
              FeatureSchema("noise", CONTINUOUS, "", (-1e9, 1e9)))
    recs = tuple(Record((float(a), float(b)), float(t)) for a, b, t in zip(x_temp, x_noise, y))
    return Dataset(recs, schema)


class TestSignificanceTable:
    def test_temperature_flagged(self, synth_381):
        table = significance_table(synth_381, 0.05)
        rows = {r.feature: r for r in table.rows}
        assert len(rows) == 10
        assert rows["temperature_C"].significant
        assert rows["temperature_C"].test == "pearson"
        assert rows["catalyst_type"].test == "kruskal-wallis"
        for r in table.rows:
            assert 0.0 <= r.p_value <= 1.0
            assert r.significant == (r.p_value < 0.05)

    def test_noise_feature_p_uniform(self):
        ps = []
        for seed in range(200):
            rng = np.random.default_rng(seed)
            t = rng.uniform(40, 385, 60)
            y = 0.2 * t + rng.normal(0, 5, 60)
            table = significance_table(_two_feature_dataset(t, rng.normal(size=60), y))
            ps.append(table.rows[1].p_value)
        assert sps.kstest(ps, "uniform").pvalue > 0.01

    def test_degenerate_feature_is_a_note(self):
        ds = _two_feature_dataset([1, 2, 3, 4], [5, 5, 5, 5], [1, 3, 2, 4])
        row = significance_table(ds).rows[1]
        assert row.p_value is None and not row.significant
        assert "constant" in row.note

    def test_alpha_checked(self, synth_small):
        with pytest.raises(InvalidArgument):
            significance_table(synth_small, 1.5)

    def test_text_and_dict(self, synth_small):
        table = significance_table(synth_small)
        assert len(table.to_dict()["rows"]) == 10
        assert table.to_text().splitlines()[0].startswith("feature")


class TestLogisticRanking:
    def test_single_informative_feature_ranks_first(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((400, 10))
        y = 2.0 * X[:, 6] + 0.5 * rng.standard_normal(400)
        ranking = rank_features_logistic(X, y)
        assert ranking.ranks[6] == 1

    def test_ranks_are_a_permutation(self, synth_381):
        from tpa_yield.preprocess import apply_encoding, apply_power_transform, fit_encoding, fit_power_transform
        X = apply_encoding(fit_encoding(synth_381), synth_381)
        Z = apply_power_transform(fit_power_transform(X), X)
        ranking = rank_features_logistic(Z, synth_381.target(), feature_names=synth_381.feature_names)
        assert sorted(ranking.ranks) == list(range(1, 11))
        mags = [a for _, a, _ in ranking.ordered()]
        assert mags == sorted(mags, reverse=True)

    def test_duplicated_column_ties(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((300, 4))
        X = np.column_stack([X, X[:, 2]])
        y = X[:, 2] + X[:, 0] + rng.standard_normal(300)
        ranking = rank_features_logistic(X, y)
        assert ranking.separation_detected
        assert ranking.ridge == 1e-6
        assert abs(abs(ranking.coefficients[2]) - abs(ranking.coefficients[4])) < 1e-8
        assert abs(ranking.ranks[2] - ranking.ranks[4]) == 1
        assert ranking.ranks[2] < ranking.ranks[4]  # schema order breaks the tie

    def test_threshold_is_median(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((50, 3))
        y = rng.uniform(size=50)
        assert rank_features_logistic(X, y).threshold == np.median(y)

    def test_separable_classes_use_ridge(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((60, 3))
        y = np.where(X[:, 0] > 0, 1.0, 0.0) + X[:, 0] * 1e-3
        ranking = rank_features_logistic(X, y)
        assert ranking.separation_detected
        assert ranking.ranks[0] == 1

    def test_needs_more_rows_than_features(self):
        with pytest.raises(InvalidArgument):
            rank_features_logistic(np.zeros((3, 5)), np.arange(3.0))

    @settings(max_examples=20)
    @given(seed=st.integers(0, 2**32 - 1), col=st.integers(0, 4),
           scale=st.floats(0.1, 50), shift=st.floats(-100, 100))
    def test_ranking_invariant_to_raw_rescaling(self, seed, col, scale, shift):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((120, 5)) * [1, 2, 3, 4, 5]
        y = raw @ np.array([1.0, -0.4, 0.3, 0.1, 0.05]) + rng.standard_normal(120)

        def standardize(M):
            return (M - M.mean(axis=0)) / M.std(axis=0)

        moved = raw.copy()
        moved[:, col] = scale * moved[:, col] + shift
        a = rank_features_logistic(standardize(raw), y)
        b = rank_features_logistic(standardize(moved), y)
        assert a.ranks == b.ranks


def test_all_pairs_of_kw_sets_have_valid_p():
    for g1, g2 in itertools.combinations(KW_GROUP_SETS, 2):
        _, p = kruskal_wallis_pvalue(g1 + g2)
        assert 0.0 <= p <= 1.0
