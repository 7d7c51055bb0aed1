import math

import numpy as np
import pytest
from scipy import integrate, stats

from app.models.models import Design
from app.services.lmm import (
    analyze_method,
    chi2_sf,
    exclude_effect,
    fit_mixed,
    fit_random_intercept,
    likelihood_ratio_test,
    limits_of_agreement,
    loa_95,
    pearson_r,
)
from app.utils.exceptions import (
    ConvergenceError,
    DesignError,
    IdentifiabilityError,
    InvalidParameterError,
    NestingError,
    UndefinedCorrelationError,
)


def balanced_groups(k=5, n=4, seed=0, between=1.0, within=0.5):
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(k), n)
    y = 0.7 + rng.normal(0, between, k)[groups] + rng.normal(0, within, k * n)
    return y, groups


def anova_ml(y, groups):
    """Closed-form ML estimates of the balanced one-way random model."""
    labels = np.unique(groups)
    k = labels.size
    n = y.size // k
    means = np.array([y[groups == g].mean() for g in labels])
    ssw = sum(((y[groups == g] - m) ** 2).sum() for g, m in zip(labels, means))
    ssb = n * ((means - y.mean()) ** 2).sum()
    v2 = ssw / (k * (n - 1))
    v1 = (ssb / k - v2) / n
    return y.mean(), v1, v2


def marginal_loglik(y, X, groups, beta, v1, v2):
    Z = (groups[:, None] == np.unique(groups)[None, :]).astype(float)
    cov = v1 * Z @ Z.T + v2 * np.eye(y.size)
    return stats.multivariate_normal(X @ beta, cov).logpdf(y)


# brute-force ratios V1 / V2: the boundary plus a log grid with 2.3% cells
ORACLE_RATIOS = np.r_[0.0, np.geomspace(1e-4, 1e3, 701)]
ORACLE_CELL = ORACLE_RATIOS[2] / ORACLE_RATIOS[1]


def profile_grid(design, ratios):
    """Profile log-likelihood, V1 and V2 at each ratio, built from per-group sums."""
    y, X, groups = design.y, design.X, np.asarray(design.groups)
    labels = np.unique(groups)
    sizes = np.array([np.sum(groups == g) for g in labels], dtype=float)
    col_sums = np.array([X[groups == g].sum(axis=0) for g in labels])
    y_sums = np.array([y[groups == g].sum() for g in labels])

    ratios = np.asarray(ratios, dtype=float)
    shrink = ratios[:, None] / (1.0 + ratios[:, None] * sizes[None, :])
    A = X.T @ X - np.einsum('lg,gi,gj->lij', shrink, col_sums, col_sums)
    b = X.T @ y - np.einsum('lg,gi,g->li', shrink, col_sums, y_sums)
    beta = np.linalg.solve(A, b[..., None])[..., 0]
    quad = y @ y - shrink @ y_sums ** 2 - np.einsum('li,li->l', b, beta)
    n = y.size
    v2 = quad / n
    logdet = np.log1p(ratios[:, None] * sizes[None, :]).sum(axis=1)
    loglik = -0.5 * (n * np.log(2 * np.pi) + n * np.log(v2) + logdet + n)
    return loglik, ratios * v2, v2


@pytest.fixture
def two_balanced_groups():
    # V1 = 4, V2 = 1, 50 observations per group
    rng = np.random.default_rng(11)
    index = np.repeat([0, 1], 50)
    y = 1.0 + rng.normal(0, 2.0, 2)[index] + rng.normal(0, 1.0, 100)
    return Design(y, np.ones((100, 1)), np.array([45.0, 60.0])[index], column_names=("intercept",))


@pytest.fixture
def three_unbalanced_groups():
    # V1 = 2, V2 = 0.5, groups of 5, 12 and 8 with one covariate
    rng = np.random.default_rng(12)
    index = np.repeat([0, 1, 2], [5, 12, 8])
    motion = (np.arange(25) % 2).astype(float)
    y = 0.5 + 1.2 * motion + rng.normal(0, math.sqrt(2.0), 3)[index] + rng.normal(0, math.sqrt(0.5), 25)
    return Design(y, np.column_stack([np.ones(25), motion]), np.array([45.0, 60.0, 75.0])[index],
                  column_names=("intercept", "motion"), effects={"motion": (1,)})


@pytest.fixture
def no_group_variance():
    # V1 = 0, V2 = 1
    rng = np.random.default_rng(13)
    groups = np.repeat([45.0, 60.0, 75.0, 90.0], 50)
    return Design(0.5 + rng.normal(0, 1.0, 200), np.ones((200, 1)), groups, column_names=("intercept",))


@pytest.fixture
def effects_design():
    rng = np.random.default_rng(42)
    groups = np.repeat([45.0, 60.0, 75.0], [6, 15, 7])
    motion = (np.arange(28) % 3 == 0).astype(float)
    crib = (np.arange(28) % 4 == 1).astype(float)
    level = {45.0: -0.4, 60.0: 0.1, 75.0: 0.5}
    y = 0.3 + 1.5 * motion + np.array([level[g] for g in groups]) + rng.normal(0, 0.4, 28)
    X = np.column_stack([np.ones(28), motion, crib])
    return Design(y, X, groups, column_names=("intercept", "motion", "mattress_crib"),
                  effects={"motion": (1,), "mattress": (2,)})


class TestFitMixed:

    def test_balanced_anova_closed_form(self):
        y, groups = balanced_groups()
        mean, v1, v2 = anova_ml(y, groups)
        assert v1 > 0
        fit = fit_random_intercept(y, groups)
        assert fit.intercept == pytest.approx(mean, rel=1e-6)
        assert fit.v1 == pytest.approx(v1, rel=1e-5)
        assert fit.v2 == pytest.approx(v2, rel=1e-5)
        assert not fit.boundary
        assert fit.identifiable

    def test_loglik_matches_dense_marginal(self, effects_design):
        fit = fit_mixed(effects_design)
        direct = marginal_loglik(effects_design.y, effects_design.X, effects_design.groups,
                                 fit.beta, fit.v1, fit.v2)
        assert fit.loglik == pytest.approx(direct, abs=1e-6)

    def test_no_grid_point_beats_the_fit(self, effects_design):
        fit = fit_mixed(effects_design)
        y, X, groups = effects_design.y, effects_design.X, effects_design.groups
        Z = (groups[:, None] == np.unique(groups)[None, :]).astype(float)
        best = -np.inf
        for v1 in np.geomspace(1e-4, 10, 25):
            for v2 in np.geomspace(1e-3, 5, 25):
                cov = v1 * Z @ Z.T + v2 * np.eye(y.size)
                w = np.linalg.inv(cov)
                beta = np.linalg.solve(X.T @ w @ X, X.T @ w @ y)
                best = max(best, stats.multivariate_normal(X @ beta, cov).logpdf(y))
        assert fit.loglik >= best - 1e-6

    def test_loglik_by_integrating_out_group_effects(self):
        y = np.array([1.2, 0.8, 1.1, -0.3, 0.1, -0.2, 0.6, 0.9, 0.4])
        groups = np.repeat(["a", "b", "c"], 3)
        fit = fit_random_intercept(y, groups)
        assert fit.v1 > 0
        total = 0.0
        sd1, sd2 = math.sqrt(fit.v1), math.sqrt(fit.v2)
        for g in "abc":
            obs = y[groups == g]

            def integrand(b):
                return np.prod(stats.norm.pdf(obs, fit.intercept + b, sd2)) * stats.norm.pdf(b, 0.0, sd1)

            value, _ = integrate.quad(integrand, -10 * sd1, 10 * sd1, points=[fit.random_effects[g]])
            total += math.log(value)
        assert fit.loglik == pytest.approx(total, abs=1e-6)

    def test_blups_shrink_group_means(self):
        y, groups = balanced_groups()
        fit = fit_random_intercept(y, groups)
        n = 4
        shrink = fit.v1 / (fit.v1 + fit.v2 / n)
        for g in np.unique(groups):
            expected = shrink * (y[groups == g].mean() - fit.intercept)
            assert fit.random_effects[g] == pytest.approx(expected, abs=1e-8)

    def test_identical_group_means_hit_the_boundary(self):
        y = np.array([1.0, 2.0, 3.0] * 3)
        groups = np.repeat(["a", "b", "c"], 3)
        fit = fit_random_intercept(y, groups)
        assert fit.v1 == 0.0
        assert fit.boundary
        assert fit.v2 == pytest.approx(2.0 / 3.0)

    def test_singleton_groups_are_not_identifiable(self):
        y = np.array([0.5, 1.5, -0.5, 0.5])
        fit = fit_random_intercept(y, ["a", "b", "c", "d"])
        assert not fit.identifiable
        assert fit.v1 == 0.0
        assert fit.intercept == pytest.approx(0.5)
        assert fit.v2 == pytest.approx(np.var(y))

    def test_zero_residuals_clamp_v2(self):
        fit = fit_random_intercept(np.zeros(6), np.repeat([1, 2], 3))
        assert fit.v2 == pytest.approx(1e-10)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)

    def test_parameter_count(self, effects_design):
        assert fit_mixed(effects_design).n_params == 5

    def test_rank_deficient_design(self):
        X = np.column_stack([np.ones(6), np.ones(6)])
        with pytest.raises(DesignError):
            fit_mixed(Design(np.arange(6.0), X, np.repeat([1, 2], 3)))

    def test_single_group(self):
        with pytest.raises(IdentifiabilityError):
            fit_random_intercept(np.arange(4.0), [1, 1, 1, 1])

    def test_iteration_cap(self):
        y, groups = balanced_groups()
        with pytest.raises(ConvergenceError):
            fit_random_intercept(y, groups, max_iter=1)


class TestGridOracle:

    def test_grid_matches_dense_likelihood(self, three_unbalanced_groups):
        design = three_unbalanced_groups
        loglik, v1, v2 = profile_grid(design, [0.7])
        Z = (design.groups[:, None] == np.unique(design.groups)[None, :]).astype(float)
        cov = v1[0] * Z @ Z.T + v2[0] * np.eye(design.y.size)
        w = np.linalg.inv(cov)
        beta = np.linalg.solve(design.X.T @ w @ design.X, design.X.T @ w @ design.y)
        direct = marginal_loglik(design.y, design.X, design.groups, beta, v1[0], v2[0])
        assert loglik[0] == pytest.approx(direct, abs=1e-8)

    @pytest.mark.parametrize("fixture", ["two_balanced_groups", "three_unbalanced_groups",
                                         "no_group_variance", "effects_design"])
    def test_variance_components_match_grid_optimum(self, request, fixture):
        design = request.getfixturevalue(fixture)
        fit = fit_mixed(design)
        loglik, v1, v2 = profile_grid(design, ORACLE_RATIOS)
        best = int(np.argmax(loglik))

        assert fit.loglik >= loglik[best] - 1e-9
        assert fit.v2 == pytest.approx(v2[best], rel=0.02)
        if best <= 1:
            # optimum at or next to the boundary
            assert fit.v1 <= ORACLE_RATIOS[best + 1] * fit.v2
        else:
            assert abs(math.log(fit.v1 / v1[best])) <= math.log(ORACLE_CELL) + 0.02

    def test_fit_reproduces_its_own_profile(self, three_unbalanced_groups):
        fit = fit_mixed(three_unbalanced_groups)
        loglik, v1, v2 = profile_grid(three_unbalanced_groups, [fit.v1 / fit.v2])
        assert fit.loglik == pytest.approx(loglik[0], abs=1e-8)
        assert fit.v1 == pytest.approx(v1[0], rel=1e-8)

    def test_zero_group_variance_lands_on_the_boundary_side(self, no_group_variance):
        fit = fit_mixed(no_group_variance)
        assert fit.v1 <= 0.1 * fit.v2
        assert fit.v2 == pytest.approx(1.0, rel=0.3)


class TestFitProperties:

    def test_dropping_an_effect_never_raises_the_likelihood(self, effects_design):
        full = fit_mixed(effects_design)
        for effect in effects_design.effects:
            reduced = fit_mixed(exclude_effect(effects_design, effect))
            assert full.loglik >= reduced.loglik - 1e-8
            assert likelihood_ratio_test(full, reduced).chi2 >= 0.0

    def test_row_order_does_not_matter(self, effects_design):
        order = np.random.default_rng(9).permutation(effects_design.y.size)
        shuffled = Design(effects_design.y[order], effects_design.X[order], effects_design.groups[order],
                          column_names=effects_design.column_names, effects=effects_design.effects)
        a, b = analyze_method(effects_design, "baseline"), analyze_method(shuffled, "baseline")
        assert b.full_fit.loglik == pytest.approx(a.full_fit.loglik, abs=1e-8)
        assert b.full_fit.v1 == pytest.approx(a.full_fit.v1, rel=1e-6)
        assert b.full_fit.v2 == pytest.approx(a.full_fit.v2, rel=1e-6)
        np.testing.assert_allclose(b.full_fit.beta, a.full_fit.beta, rtol=1e-6, atol=1e-9)
        assert b.loa.bias == pytest.approx(a.loa.bias, abs=1e-8)
        assert b.loa.sd == pytest.approx(a.loa.sd, rel=1e-6)
        for before, after in zip(a.exclusions, b.exclusions):
            assert after.lrt.chi2 == pytest.approx(before.lrt.chi2, abs=1e-6)

    @pytest.mark.parametrize("shift", [-3.0, 7.0])
    def test_constant_shift_moves_bias_only(self, effects_design, shift):
        shifted = Design(effects_design.y + shift, effects_design.X, effects_design.groups,
                         column_names=effects_design.column_names, effects=effects_design.effects)
        a, b = analyze_method(effects_design, "baseline"), analyze_method(shifted, "baseline")
        assert b.loa.bias == pytest.approx(a.loa.bias + shift, abs=1e-8)
        assert b.loa.sd == pytest.approx(a.loa.sd, rel=1e-6)
        assert b.loa.lower == pytest.approx(a.loa.lower + shift, abs=1e-6)
        assert b.loa.upper == pytest.approx(a.loa.upper + shift, abs=1e-6)
        assert b.full_fit.beta[0] == pytest.approx(a.full_fit.beta[0] + shift, abs=1e-8)
        np.testing.assert_allclose(b.full_fit.beta[1:], a.full_fit.beta[1:], atol=1e-8)


class TestLimitsOfAgreement:

    def test_worked_example(self):
        loa = limits_of_agreement(0.56, 1.436)
        assert round(loa.lower, 2) == -2.25
        assert round(loa.upper, 2) == 3.37
        assert loa.width == pytest.approx(2 * 1.96 * 1.436)

    def test_second_worked_example(self):
        loa = limits_of_agreement(5.38, 0.888)
        assert loa.lower == pytest.approx(3.64, abs=0.02)
        assert loa.upper == pytest.approx(7.12, abs=0.02)

    def test_negative_sd(self):
        with pytest.raises(InvalidParameterError):
            limits_of_agreement(0.0, -1.0)

    def test_bias_from_intercept_only_model(self, effects_design):
        full = fit_mixed(effects_design)
        bias = fit_random_intercept(effects_design.y, effects_design.groups)
        loa = loa_95(full, bias, "baseline")
        assert loa.bias == pytest.approx(bias.intercept)
        assert loa.sd == pytest.approx(math.sqrt(full.v1 + full.v2))
        assert loa.method == "baseline"

    def test_perfect_agreement(self):
        fit = fit_random_intercept(np.zeros(6), np.repeat([1, 2], 3))
        loa = loa_95(fit, fit)
        assert loa.lower == pytest.approx(0.0, abs=1e-4)
        assert loa.upper == pytest.approx(0.0, abs=1e-4)


class TestLikelihoodRatio:

    @pytest.mark.parametrize("chi2,df,expected", [
        (0.4693, 1, 0.49),
        (0.0237, 1, 0.88),
        (3.8415, 1, 0.05),
    ])
    def test_known_tail_areas(self, chi2, df, expected):
        assert round(chi2_sf(chi2, df), 2) == expected

    def test_matches_scipy(self):
        for x in (0.1, 1.0, 5.0, 20.0):
            for df in (1, 2, 3):
                assert chi2_sf(x, df) == pytest.approx(stats.chi2.sf(x, df), rel=1e-10)

    def test_zero_statistic(self):
        assert chi2_sf(0.0, 1) == 1.0

    @pytest.mark.parametrize("x,df", [(-1.0, 1), (1.0, 0), (1.0, 1.5)])
    def test_invalid(self, x, df):
        with pytest.raises(InvalidParameterError):
            chi2_sf(x, df)

    def test_strong_effect_is_significant(self, effects_design):
        full = fit_mixed(effects_design)
        reduced = fit_mixed(exclude_effect(effects_design, "motion"))
        result = likelihood_ratio_test(full, reduced)
        assert result.df == 1
        assert result.chi2 == pytest.approx(2 * (full.loglik - reduced.loglik))
        assert result.p < 0.01

    def test_reduced_must_be_smaller(self, effects_design):
        full = fit_mixed(effects_design)
        with pytest.raises(NestingError):
            likelihood_ratio_test(full, full)

    def test_different_data(self, effects_design):
        full = fit_mixed(effects_design)
        other = fit_random_intercept(np.arange(6.0), np.repeat([1, 2], 3))
        with pytest.raises(NestingError):
            likelihood_ratio_test(full, other)


class TestPearson:

    def test_matches_numpy(self):
        rng = np.random.default_rng(8)
        a, b = rng.normal(size=30), rng.normal(size=30)
        assert pearson_r(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1])

    def test_perfect_correlation(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_constant_vector(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson_r([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            pearson_r([1, 2, 3], [1, 2])


class TestAnalyzeMethod:

    def test_exclude_effect_reindexes_columns(self, effects_design):
        reduced = exclude_effect(effects_design, "motion")
        assert reduced.column_names == ("intercept", "mattress_crib")
        assert reduced.effects == {"mattress": (1,)}

    def test_exclude_unknown_effect(self, effects_design):
        with pytest.raises(InvalidParameterError):
            exclude_effect(effects_design, "grunting")

    def test_one_row_per_effect(self, effects_design):
        analysis = analyze_method(effects_design, "baseline")
        assert [row.effect for row in analysis.exclusions] == ["motion", "mattress"]
        assert all(row.lrt.df == 1 for row in analysis.exclusions)
        assert analysis.n_trials == 28
        assert analysis.pearson_r is None
        motion = analysis.exclusions[0]
        # without the motion column its variance moves into the residual
        assert motion.loa.sd > analysis.loa.sd
        assert motion.loa.bias == pytest.approx(analysis.loa.bias)

    def test_workers_do_not_change_result(self, effects_design):
        serial = analyze_method(effects_design, "baseline")
        threaded = analyze_method(effects_design, "baseline", workers=3)
        for a, b in zip(serial.exclusions, threaded.exclusions):
            assert a.lrt.chi2 == pytest.approx(b.lrt.chi2)

    def test_correlation_with_gold(self, effects_design):
        gold = np.asarray(effects_design.groups, dtype=float)
        analysis = analyze_method(effects_design, "modified", estimates=gold + effects_design.y, gold=gold)
        assert analysis.pearson_r == pytest.approx(np.corrcoef(gold + effects_design.y, gold)[0, 1])
