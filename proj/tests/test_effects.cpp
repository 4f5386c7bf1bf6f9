#include "superspread/effects.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace superspread;

namespace
{

CovariatePanel panel_of(std::vector<std::string> names, std::vector<CovariateKind> kinds,
                        std::vector<Eigen::MatrixXd> values, std::vector<std::string> locations = {"A"})
{
    CovariatePanel p;
    p.start = parse_date("2020-03-01");
    p.n_days = static_cast<int>(values.front().rows());
    p.locations = std::move(locations);
    p.names = std::move(names);
    p.kinds = std::move(kinds);
    p.stats.assign(p.names.size(), std::nullopt);
    p.values = std::move(values);
    return p;
}

const CompartmentKey a15{"A", AgeGroup::A15_34};

} // namespace

TEST_CASE("reproductive_number")
{
    Eigen::MatrixXd x(2, 2);
    x << 0, 0, 1, 1;
    const CovariatePanel panel = panel_of({"d1", "d2"}, {CovariateKind::Dummy, CovariateKind::Dummy}, {x});
    EffectSet e = EffectSet::for_compartments({a15}, panel.names);
    e.r0 << 2.5;
    CHECK(reproductive_number(e, panel, a15, 1) == 2.5);

    e.beta << -0.58, 0.0;
    CHECK(reproductive_number(e, panel, a15, 1) == doctest::Approx(1.05).epsilon(1e-12));

    e.r0 << 2.0;
    e.beta << -0.5, 0.2;
    CHECK(reproductive_number(e, panel, a15, 1) == doctest::Approx(1.2).epsilon(1e-12));
    // toggling a dummy scales R by exactly (1 + beta)
    CHECK(reproductive_number(e, panel, a15, 1) / reproductive_number(e, panel, a15, 0) ==
          doctest::Approx(0.5 * 1.2).epsilon(1e-12));

    e.beta << -1.5, 0.0;
    try {
        reproductive_number(e, panel, a15, 1);
        FAIL("expected NonPositiveRateError");
    }
    catch (const NonPositiveRateError& err) {
        CHECK(err.covariate == "d1");
    }
    CHECK_THROWS_AS(e.validate_against(panel), NonPositiveRateError);

    e.beta << -0.2, 0.1;
    e.noise = Eigen::MatrixXd::Constant(1, 2, 0.1);
    CHECK(reproductive_number(e, panel, a15, 1) == doctest::Approx(2.0 * 0.8 * 1.1 * 1.1).epsilon(1e-12));
}

TEST_CASE("reproductive_number is invariant under covariate permutation")
{
    Eigen::MatrixXd x(3, 3), y(3, 3);
    x << 0.3, 1, -1.2, 0.1, 0, 2.0, -0.5, 1, 0.4;
    y = x(Eigen::all, std::vector<int>{2, 0, 1});
    const auto kinds = std::vector<CovariateKind>{CovariateKind::Real, CovariateKind::Dummy, CovariateKind::Real};
    const CovariatePanel p1 = panel_of({"a", "b", "c"}, kinds, {x});
    const CovariatePanel p2 = panel_of({"c", "a", "b"}, {kinds[2], kinds[0], kinds[1]}, {y});
    EffectSet e1 = EffectSet::for_compartments({a15}, p1.names);
    EffectSet e2 = EffectSet::for_compartments({a15}, p2.names);
    e1.r0 << 1.7;
    e2.r0 << 1.7;
    e1.beta << 0.1, -0.3, 0.2;
    e2.beta << 0.2, 0.1, -0.3;
    for (int d = 0; d < 3; ++d) {
        CHECK(reproductive_number(e1, p1, a15, d) == doctest::Approx(reproductive_number(e2, p2, a15, d)).epsilon(1e-15));
    }
}

TEST_CASE("standardize")
{
    Eigen::MatrixXd two(2, 1);
    two << 0, 2;
    const CovariatePanel p = panel_of({"t"}, {CovariateKind::Real}, {two});
    const CovariatePanel s = standardize(p, "t");
    CHECK(s.values[0](0, 0) == doctest::Approx(-1.0));
    CHECK(s.values[0](1, 0) == doctest::Approx(1.0));
    CHECK(s.kinds[0] == CovariateKind::Standardized);

    const CovariatePanel constant = panel_of({"t"}, {CovariateKind::Real}, {Eigen::MatrixXd::Constant(5, 1, 3.0)});
    CHECK_THROWS_AS(standardize(constant, "t"), DataValidationError);

    // re-applying stored stats reproduces the affine map, and the in-sample moments are 0 and 1
    Eigen::MatrixXd raw(6, 1);
    raw << 12.5, 3.1, -4.0, 8.8, 0.2, 5.5;
    const CovariatePanel raw_panel = panel_of({"t"}, {CovariateKind::Real}, {raw});
    const CovariatePanel st = standardize(raw_panel, "t");
    const Eigen::VectorXd z = st.values[0].col(0);
    CHECK(std::abs(z.mean()) < 1e-9);
    CHECK(std::abs(std::sqrt((z.array() - z.mean()).square().mean()) - 1) < 1e-9);
    const CovariatePanel again = standardize_with(raw_panel, "t", *st.stats[0]);
    CHECK((again.values[0] - st.values[0]).cwiseAbs().maxCoeff() < 1e-15);

    // R_t depends on the standardized covariate only, not on raw units
    CovariatePanel fahrenheit = raw_panel;
    fahrenheit.values[0] = raw * 1.8 + Eigen::MatrixXd::Constant(6, 1, 32);
    const CovariatePanel st_f = standardize(fahrenheit, "t");
    EffectSet e = EffectSet::for_compartments({a15}, {"t"});
    e.r0 << 2.0;
    e.beta << -0.15;
    for (int d = 0; d < 6; ++d) {
        const double r1 = reproductive_number(e, st, a15, d);
        const double r2 = reproductive_number(e, st_f, a15, d);
        CHECK(std::abs(r1 - r2) / r1 < 1e-9);
    }
}

TEST_CASE("total_effect")
{
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 1);
    const std::vector<std::string> group{"traced_ratio"};
    CovariatePanel p = panel_of({"traced_ratio"}, {CovariateKind::Real}, {zero});
    EffectSet e = EffectSet::for_compartments({a15}, p.names);
    e.beta << -0.33;
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
    CHECK((total_effect(e, p, group, w).array() == 1.0).all());

    p.values[0].setConstant(0.45);
    CHECK(total_effect(e, p, group, w)(0) == doctest::Approx(0.8515).epsilon(1e-12));

    CHECK_THROWS_AS(total_effect(e, p, std::vector<std::string>{}, w), InvalidParameterError);

    // dummy singleton group equals the per-day location mean of (1 + beta x), and matches R ratios
    Eigen::MatrixXd d1(3, 1), d2(3, 1);
    d1 << 0, 1, 1;
    d2 << 0, 0, 1;
    const CovariatePanel dp = panel_of({"lockdown"}, {CovariateKind::Dummy}, {d1, d2}, {"A", "B"});
    const CompartmentKey b15{"B", AgeGroup::A15_34};
    EffectSet de = EffectSet::for_compartments({a15, b15}, dp.names);
    de.r0 << 2.0, 3.0;
    de.beta << -0.4;
    const Eigen::VectorXd series = total_effect(de, dp, std::vector<std::string>{"lockdown"}, w);
    CHECK(series(0) == doctest::Approx(1.0));
    CHECK(series(1) == doctest::Approx(0.8));
    CHECK(series(2) == doctest::Approx(0.6));
    const double via_r = 0.5 * (reproductive_number(de, dp, a15, 1) / 2.0 + reproductive_number(de, dp, b15, 1) / 3.0);
    CHECK(series(1) == doctest::Approx(via_r).epsilon(1e-12));
}

TEST_CASE("individual_tracing_effect")
{
    const TracingEffect capped = individual_tracing_effect(-0.33, 0.25);
    CHECK(capped.reduction == 1.0);
    CHECK(capped.truncated);
    const TracingEffect paper = individual_tracing_effect(-0.21, 0.25);
    CHECK(paper.reduction == doctest::Approx(0.84).epsilon(1e-12));
    CHECK_FALSE(paper.truncated);
    const TracingEffect none = individual_tracing_effect(0.0, 0.6);
    CHECK(none.reduction == 0.0);
    CHECK(none.no_protective_effect);
    CHECK_THROWS_AS(individual_tracing_effect(-0.1, 0.0), InvalidParameterError);
}

TEST_CASE("seasonal_extrapolation")
{
    Climatology clim;
    clim.temperature.resize(365);
    clim.humidity.resize(365);
    for (int d = 0; d < 365; ++d) {
        clim.temperature(d) = 10 - 9 * std::cos(2 * std::numbers::pi * (d - 15) / 365.0);
        clim.humidity(d) = 78 + 8 * std::cos(2 * std::numbers::pi * (d - 15) / 365.0);
    }
    Eigen::MatrixXd x(2, 2);
    x << -1, 1, 1, -1;
    CovariatePanel p = panel_of({"temperature", "humidity"}, {CovariateKind::Standardized, CovariateKind::Standardized},
                                {x});
    p.stats = {Standardization{10, 6}, Standardization{78, 5}};
    EffectSet e = EffectSet::for_compartments({a15}, p.names);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);

    e.beta << 0, 0;
    const SeasonalSeries flat = seasonal_extrapolation(e, p, clim, w);
    CHECK((flat.multiplier.array() == 1.0).all());
    CHECK(flat.peak_ratio == 1.0);
    CHECK(flat.smoothed.size() == 365);

    e.beta << -0.1, 0;
    const SeasonalSeries s = seasonal_extrapolation(e, p, clim, w);
    Index coldest = 0, warmest = 0, peak = 0, trough = 0;
    clim.temperature.minCoeff(&coldest);
    clim.temperature.maxCoeff(&warmest);
    s.multiplier.maxCoeff(&peak);
    s.multiplier.minCoeff(&trough);
    CHECK(peak == coldest);
    CHECK(trough == warmest);
    // direct evaluation oracle
    const double winter = 1 - 0.1 * (clim.temperature.minCoeff() - 10) / 6.0;
    const double summer = 1 - 0.1 * (clim.temperature.maxCoeff() - 10) / 6.0;
    CHECK(s.multiplier.maxCoeff() == doctest::Approx(winter).epsilon(1e-9));
    CHECK(s.multiplier.minCoeff() == doctest::Approx(summer).epsilon(1e-9));
    CHECK(s.peak_ratio > 1.0);
    CHECK(s.peak_ratio < winter / summer);

    Climatology gap = clim;
    gap.temperature(100) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(seasonal_extrapolation(e, p, gap, w), DataValidationError);
}

TEST_CASE("rolling_mean_circular")
{
    Eigen::VectorXd v = Eigen::VectorXd::Zero(10);
    v(0) = 14;
    const Eigen::VectorXd m = rolling_mean_circular(v, 14);
    CHECK(m.sum() == doctest::Approx(14.0));
    Eigen::VectorXd c = Eigen::VectorXd::Constant(365, 2.5);
    CHECK((rolling_mean_circular(c, 14).array() - 2.5).abs().maxCoeff() < 1e-12);
}
