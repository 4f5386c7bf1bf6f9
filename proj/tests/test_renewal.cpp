#include "superspread/renewal.hpp"
#include "support/stats.hpp"

#include <doctest.h>

#include <cmath>

using namespace superspread;

namespace
{

CovariatePanel empty_covariates(const std::vector<std::string>& locations, int days)
{
    CovariatePanel cov;
    cov.start = parse_date("2020-03-01");
    cov.n_days = days;
    cov.locations = locations;
    cov.values.assign(locations.size(), Eigen::MatrixXd(days, 0));
    return cov;
}

ModelParams single(double r0, double psi, int init_days = 6)
{
    ModelParams p = make_params({{"A", AgeGroup::A15_34}}, {});
    p.effects.r0.setConstant(r0);
    p.dispersion.setConstant(psi);
    p.init_days = init_days;
    return p;
}

} // namespace

TEST_CASE("viral_load")
{
    Eigen::VectorXd h(1);
    h << 10;
    CHECK(viral_load(h, point_mass_delay(1, 5)) == 10.0);
    CHECK(viral_load(Eigen::VectorXd::Zero(4), discretize_gamma(5.5, 2.0, 21)) == 0.0);
    Eigen::VectorXd h2(2);
    h2 << 4, 6;
    Eigen::VectorXd masses(2);
    masses << 0.5, 0.5;
    CHECK(viral_load(h2, delay_from_masses(masses)) == doctest::Approx(5.0).epsilon(1e-12));

    // lags beyond the support contribute nothing
    Eigen::VectorXd long_history = Eigen::VectorXd::Constant(30, 7.0);
    CHECK(viral_load(long_history, discretize_gamma(5.5, 2.0, 21)) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("step moments")
{
    Rng rng = derive_stream(3, 0);
    for (int i = 0; i < 100; ++i) {
        CHECK(step(0.0, 2.0, 0.5, rng) == 0);
        CHECK(step_constant_dispersion(0.0, 2.0, 0.5, rng) == 0);
    }
    std::vector<double> x(100000);
    for (auto& v : x) {
        v = static_cast<double>(step(1000.0, 1.0, 0.5, rng));
    }
    CHECK(std::abs(stats::mean(x) - 1000) < 10);
    CHECK(std::abs(stats::variance(x) / stats::mean(x) - 3.0) < 0.1);

    int zeros = 0;
    for (int i = 0; i < 100000; ++i) {
        zeros += step(1.0, 2.5, 0.2, rng) == 0;
    }
    // frozen oracle (0.2 / 2.7)^0.2
    CHECK(std::pow(0.2 / 2.7, 0.2) == doctest::Approx(0.5942008193).epsilon(1e-9));
    CHECK(std::abs(zeros / 1e5 - 0.5942008193) < 0.005);

    for (auto& v : x) {
        v = static_cast<double>(step_constant_dispersion(1000.0, 1.0, 0.5, rng));
    }
    CHECK(std::abs(stats::variance(x) / stats::mean(x) / 2001.0 - 1) < 0.1);
}

TEST_CASE("both variants coincide at unit load")
{
    Rng rng = derive_stream(5, 0);
    std::vector<std::int64_t> a(100000), b(100000);
    for (auto& v : a) {
        v = step(1.0, 1.0, 0.5, rng);
    }
    for (auto& v : b) {
        v = step_constant_dispersion(1.0, 1.0, 0.5, rng);
    }
    CHECK(stats::chi_square_two_sample(a, b).p_value > 0.01);
}

TEST_CASE("per-individual step equals a sum of individual offspring draws")
{
    int passed = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng = derive_stream(seed, 9);
        std::vector<std::int64_t> a(20000), b(20000);
        for (auto& v : a) {
            v = step(5.0, 1.4, 0.3, rng);
        }
        for (auto& v : b) {
            v = 0;
            for (int i = 0; i < 5; ++i) {
                v += nb_sample(1.4, 0.3, rng);
            }
        }
        passed += stats::chi_square_two_sample(a, b).p_value > 0.01;
    }
    CHECK(passed >= 9);
}

TEST_CASE("expected_cases")
{
    const Counts flat = Counts::Constant(40, 100);
    const Delay d = discretize_gamma(5.5, 2.0, 21);
    for (Index t = 21; t < 40; ++t) {
        CHECK(expected_cases(flat, d, 0.25, t) == doctest::Approx(25.0).epsilon(1e-12));
    }
    Counts pulse = Counts::Zero(12);
    pulse(3) = 40;
    CHECK(expected_cases(pulse, point_mass_delay(5, 8), 0.5, 8) == doctest::Approx(20.0));
    CHECK_THROWS_AS(expected_cases(pulse, d, 0.0, 8), InvalidParameterError);

    // peak shift of a symmetric bump under gamma incubation with mean 5.3
    Counts bump = Counts::Zero(80);
    for (int t = 0; t < 80; ++t) {
        bump(t) = std::llround(1000 * std::exp(-0.5 * std::pow((t - 30) / 4.0, 2)));
    }
    const Delay s = discretize_gamma(5.3, 2.0, 21);
    Index best = 0;
    double peak = -1;
    for (Index t = 0; t < 80; ++t) {
        const double e = expected_cases(bump, s, 1.0, t);
        if (e > peak) {
            peak = e;
            best = t;
        }
    }
    CHECK(std::abs((best - 30) - 5) <= 1);
}

TEST_CASE("critical process stays flat")
{
    ModelParams p = single(1.0, 1e6);
    p.init_mean = 6000;
    const CovariatePanel cov = empty_covariates({"A"}, 60);
    double early = 0, late = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const SimulatedPanel sim = simulate(p, cov, 60, TransmissionVariant::PerIndividual, seed);
        const Counts& i = sim.latent[0].infections;
        early += static_cast<double>(i.segment(6 + 10, 10).sum());
        late += static_cast<double>(i.segment(6 + 50, 10).sum());
    }
    CHECK(std::abs(late / early - 1) < 0.02);
}

TEST_CASE("branching growth with unit generation time")
{
    ModelParams p = single(2.5, 1.0, 1);
    p.generation_mean = 1.0;
    p.generation_sd = 1e-6;
    p.latent = {Counts::Constant(1, 10)};
    const CovariatePanel cov = empty_covariates({"A"}, 10);
    double total = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        total += static_cast<double>(simulate(p, cov, 10, TransmissionVariant::PerIndividual, seed).latent[0].infections(10));
    }
    CHECK(std::abs(total / 500 / (10 * std::pow(2.5, 10)) - 1) < 0.15);
}

TEST_CASE("reporting thinning, determinism and no importation")
{
    ModelParams p = make_params({{"A", AgeGroup::A15_34}, {"A", AgeGroup::A35_59}}, {});
    p.effects.r0.setConstant(1.0);
    p.dispersion.setConstant(50.0);
    p.init_mean = 3000;
    p.reporting_rate = 0.25;
    const CovariatePanel cov = empty_covariates({"A"}, 200);
    const SimulatedPanel sim = simulate(p, cov, 200, TransmissionVariant::PerIndividual, 17);
    const Delay s = p.incubation();
    double cases = 0, shifted = 0;
    for (int t = 30; t < 200; ++t) {
        cases += static_cast<double>(sim.sampled_cases(0, t));
        shifted += expected_cases(sim.latent[0].infections, s, 1.0, 6 + t);
    }
    CHECK(std::abs(cases / shifted - 0.25) < 0.01);

    const SimulatedPanel again = simulate(p, cov, 200, TransmissionVariant::PerIndividual, 17);
    CHECK(again.sampled_cases == sim.sampled_cases);
    CHECK(again.latent[1].infections == sim.latent[1].infections);

    for (int t = 0; t < 200; ++t) {
        const double e = expected_cases(sim.latent[0].infections, s, 0.25, 6 + t);
        CHECK(sim.expected_cases(0, t) == doctest::Approx(e).epsilon(1e-12));
        const double load = viral_load(sim.latent[0].infections.head(6 + t), p.generation());
        CHECK(sim.latent[0].viral_load(6 + t) == doctest::Approx(load).epsilon(1e-12));
    }

    p.latent = {Counts::Zero(6), Counts::Constant(6, 500)};
    const SimulatedPanel isolated = simulate(p, cov, 200, TransmissionVariant::PerIndividual, 17);
    CHECK(isolated.latent[0].infections.sum() == 0);
    CHECK(isolated.latent[0].extinction_day == 0);
    CHECK(isolated.latent[1].infections.sum() > 0);
}

TEST_CASE("simulate rejects covariate gaps")
{
    ModelParams p = make_params({{"A", AgeGroup::A15_34}}, {"lockdown"});
    p.init_mean = 10;
    CovariatePanel cov = empty_covariates({"A"}, 10);
    cov.names = {"lockdown"};
    cov.kinds = {CovariateKind::Dummy};
    cov.stats = {std::nullopt};
    cov.values = {Eigen::MatrixXd::Zero(10, 1)};
    cov.values[0](4, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
        simulate(p, cov, 10, TransmissionVariant::PerIndividual, 1);
        FAIL("expected a data validation error");
    }
    catch (const DataValidationError& e) {
        const std::string what = e.what();
        CHECK(what.find("lockdown") != std::string::npos);
        CHECK(what.find("2020-03-05") != std::string::npos);
        CHECK(what.find("A:15-34") != std::string::npos);
    }
    CHECK_THROWS_AS(simulate(p, cov, 20, TransmissionVariant::PerIndividual, 1), DataValidationError);
}

TEST_CASE("growth-rate variance laws at load 200")
{
    // unit-lag generation so that L_t = i_{t-1}; the constant variant is heavy tailed and needs more draws
    Rng rng = derive_stream(21, 0);
    std::vector<double> g(2000), h(200000);
    for (auto& v : g) {
        v = static_cast<double>(step(200.0, 2.5, 0.2, rng)) / 200.0;
    }
    for (auto& v : h) {
        v = static_cast<double>(step_constant_dispersion(200.0, 2.5, 0.2, rng)) / 200.0;
    }
    CHECK(std::abs(stats::variance(g) / (2.5 * 2.7 / (200 * 0.2)) - 1) < 0.1);
    CHECK(std::abs(stats::variance(h) / (2.5 / 200 + 2.5 * 2.5 / 0.2) - 1) < 0.1);
}
