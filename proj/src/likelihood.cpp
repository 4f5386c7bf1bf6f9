#include "chain_state.hpp"

#include <array>
#include <numbers>

namespace superspread
{

namespace detail
{

double normal_lpdf(double x, double mean, double sd)
{
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
}

double truncated_normal_lpdf(double x, double mean, double sd, double lower, double upper)
{
    if (!(x > lower) || x > upper) {
        return neg_inf;
    }
    auto cdf = [&](double v) { return 0.5 * std::erfc(-(v - mean) / (sd * std::numbers::sqrt2)); };
    const double mass = (std::isinf(upper) ? 1.0 : cdf(upper)) - cdf(lower);
    return normal_lpdf(x, mean, sd) - std::log(mass);
}

} // namespace detail

using detail::normal_lpdf;
using detail::truncated_normal_lpdf;

void PriorConfig::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0) || !std::isfinite(v)) {
            throw ConfigError(std::string("prior ") + name + " must be > 0");
        }
    };
    positive(beta_sd, "beta_sd");
    positive(delay_mean, "delay_mean");
    positive(delay_mean_sd, "delay_mean_sd");
    positive(delay_sd, "delay_sd");
    positive(dispersion_sd, "dispersion_sd");
    positive(init_mean, "init_mean");
    positive(init_sd, "init_sd");
    positive(r0_sd, "r0_sd");
    if (!(noise_sd >= 0) || !(reporting_rate_sd >= 0)) {
        throw ConfigError("prior noise_sd and reporting_rate_sd must be >= 0");
    }
    if (!(reporting_rate > 0 && reporting_rate <= 1)) {
        throw ConfigError("prior reporting_rate must lie in (0, 1]");
    }
    if (init_days < 1) {
        throw ConfigError("prior init_days must be >= 1");
    }
    if (max_lag < 1) {
        throw ConfigError("prior max_lag must be >= 1");
    }
}

double init_logpmf(std::int64_t count, double init_mean, int init_days)
{
    if (count < 0) {
        return detail::neg_inf;
    }
    const double m = init_mean / init_days;
    if (!(m > 0)) {
        return count == 0 ? 0.0 : detail::neg_inf;
    }
    if (count == 0) {
        return std::log(-std::expm1(-0.5 / m));
    }
    return -(static_cast<double>(count) - 0.5) / m + std::log(-std::expm1(-1.0 / m));
}

double log_prior(const ModelParams& params, const PriorConfig& priors)
{
    const EffectSet& e = params.effects;
    double lp = 0;
    for (Index c = 0; c < e.r0.size(); ++c) {
        lp += truncated_normal_lpdf(e.r0(c), priors.r0_mean, priors.r0_sd, 0.0);
    }
    for (Index k = 0; k < e.beta.size(); ++k) {
        lp += normal_lpdf(e.beta.data()[k], priors.beta_mean, priors.beta_sd);
    }
    for (Index a = 0; a < params.dispersion.size(); ++a) {
        lp += truncated_normal_lpdf(params.dispersion(a), 0.0, priors.dispersion_sd, 0.0);
    }
    for (double mean : {params.generation_mean, params.incubation_mean}) {
        lp += mean > 0 ? normal_lpdf(mean, priors.delay_mean, priors.delay_mean_sd) : detail::neg_inf;
    }
    lp += truncated_normal_lpdf(params.init_mean, priors.init_mean, priors.init_sd, 0.0);
    for (const auto& path : params.latent) {
        for (int k = 0; k < params.init_days && k < path.size(); ++k) {
            lp += init_logpmf(path(k), params.init_mean, params.init_days);
        }
    }
    if (e.has_noise() && priors.noise_sd > 0) {
        for (Index k = 0; k < e.noise.size(); ++k) {
            lp += truncated_normal_lpdf(e.noise.data()[k], 0.0, priors.noise_sd, -1.0);
        }
    }
    if (priors.reporting_rate_sd > 0) {
        lp += truncated_normal_lpdf(params.reporting_rate, priors.reporting_rate, priors.reporting_rate_sd, 0.0, 1.0);
    }
    return lp;
}

ModelParams params_for_panel(const Panel& panel, const PriorConfig& priors)
{
    ModelParams p = make_params(panel.compartments, panel.covariates.names);
    p.effects.r0.setConstant(priors.r0_mean);
    p.effects.beta.setConstant(priors.beta_mean);
    p.effects.noise_sd = priors.noise_sd;
    p.reporting_rate = priors.reporting_rate;
    p.generation_mean = priors.delay_mean;
    p.incubation_mean = priors.delay_mean;
    p.generation_sd = priors.delay_sd;
    p.incubation_sd = priors.delay_sd;
    p.max_lag = priors.max_lag;
    p.init_mean = priors.init_mean;
    p.init_days = priors.init_days;
    return p;
}

namespace detail
{

double log_factorial(std::int64_t n)
{
    static const auto table = [] {
        std::array<double, 4096> t{};
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = std::lgamma(static_cast<double>(i) + 1.0);
        }
        return t;
    }();
    if (n >= 0 && n < static_cast<std::int64_t>(table.size())) {
        return table[static_cast<std::size_t>(n)];
    }
    int sign = 0;
    return ::lgamma_r(static_cast<double>(n) + 1.0, &sign);
}

double delay_tolerance(const Delay& delay)
{
    double smallest = 1.0;
    for (Index l = 0; l < delay.pmf.size(); ++l) {
        if (delay.pmf(l) > 0) {
            smallest = std::min(smallest, delay.pmf(l));
        }
    }
    return 0.5 * smallest;
}

ChainState::ChainState(const Panel& panel, const PriorConfig& priors, ModelParams params)
    : panel(panel)
    , priors(priors)
    , p(std::move(params))
{
    n_comp = static_cast<int>(panel.compartments.size());
    init = p.init_days;
    days = panel.n_days;
    check_dimensions();
    noise_on = p.effects.has_noise();
    infections = CountMatrix::Zero(n_comp, init + days);
    for (int c = 0; c < n_comp; ++c) {
        infections.row(c) = p.latent[static_cast<std::size_t>(c)].transpose();
    }
    const auto n_age = p.effects.age_groups.size();
    by_age.assign(n_age, {});
    by_location.assign(p.effects.locations.size(), {});
    for (int c = 0; c < n_comp; ++c) {
        const auto& key = panel.compartments[static_cast<std::size_t>(c)];
        cov_location.push_back(panel.covariates.size() > 0 ? panel.covariates.location_index(key.location) : -1);
        age.push_back(p.effects.compartment_age[static_cast<std::size_t>(c)]);
        location.push_back(p.effects.compartment_location[static_cast<std::size_t>(c)]);
        by_age[static_cast<std::size_t>(age.back())].push_back(c);
        by_location[static_cast<std::size_t>(location.back())].push_back(c);
    }
    refresh();
}

void ChainState::check_dimensions() const
{
    if (p.effects.compartments != panel.compartments) {
        throw DataValidationError("model compartments do not match the panel");
    }
    if (p.effects.covariates != panel.covariates.names) {
        throw DataValidationError("model covariates do not match the panel");
    }
    if (panel.cases.rows() != n_comp || panel.cases.cols() != days) {
        throw DataValidationError("case matrix shape does not match the panel");
    }
    if (panel.covariates.size() > 0 && panel.covariates.n_days < days) {
        throw DataValidationError("covariates do not cover the panel window");
    }
    if (p.latent.size() != static_cast<std::size_t>(n_comp)) {
        throw DataValidationError("latent infections missing for some compartments");
    }
    for (const auto& path : p.latent) {
        if (path.size() != init + days) {
            throw DataValidationError("latent infections must cover " + std::to_string(init) +
                                      " seeded days plus the window");
        }
    }
    if (p.dispersion.size() != static_cast<Index>(p.effects.age_groups.size())) {
        throw DataValidationError("dispersion must have one entry per age group");
    }
    if (p.effects.has_noise() &&
        (p.effects.noise.rows() != static_cast<Index>(p.effects.locations.size()) || p.effects.noise.cols() < days)) {
        throw DataValidationError("noise terms must cover every location and window day");
    }
    for (int c = 0; c < n_comp; ++c) {
        if (panel.covariates.size() > 0 &&
            panel.covariates.location_index(panel.compartments[static_cast<std::size_t>(c)].location) < 0) {
            throw DataValidationError("no covariates for compartment " +
                                      to_string(panel.compartments[static_cast<std::size_t>(c)]));
        }
    }
}

double ChainState::covariate_multiplier_at(int c, int t, const Eigen::MatrixXd& beta) const
{
    if (cov_location[static_cast<std::size_t>(c)] < 0) {
        return 1.0;
    }
    return covariate_multiplier(beta.row(age[static_cast<std::size_t>(c)]),
                                panel.covariates.row(cov_location[static_cast<std::size_t>(c)], t));
}

double ChainState::noise_factor(int c, int t) const
{
    return noise_on ? 1.0 + p.effects.noise(location[static_cast<std::size_t>(c)], t) : 1.0;
}

void ChainState::refresh()
{
    generation = p.generation();
    incubation = p.incubation();
    load_tol = delay_tolerance(generation);
    expected_tol = p.reporting_rate * delay_tolerance(incubation);
    load.resize(n_comp, days);
    expected.resize(n_comp, days);
    cov_mult.resize(n_comp, days);
    r.resize(n_comp, days);
    shape.resize(n_comp, days);
    nb.resize(n_comp, days);
    pois.resize(n_comp, days);
    for (int c = 0; c < n_comp; ++c) {
        const double psi = p.dispersion(age[static_cast<std::size_t>(c)]);
        const auto row = infections.row(c);
        for (int t = 0; t < days; ++t) {
            const int k = init + t;
            double l = 0;
            for (int lag = 1; lag <= generation.max_lag() && lag <= k; ++lag) {
                l += generation.pmf(lag - 1) * static_cast<double>(row(k - lag));
            }
            double e = 0;
            for (int lag = 1; lag <= incubation.max_lag() && lag <= k; ++lag) {
                e += incubation.pmf(lag - 1) * static_cast<double>(row(k - lag));
            }
            e *= p.reporting_rate;
            load(c, t) = l < load_tol ? 0.0 : l;
            expected(c, t) = e < expected_tol ? 0.0 : e;
            cov_mult(c, t) = covariate_multiplier_at(c, t, p.effects.beta);
            r(c, t) = p.effects.r0(c) * cov_mult(c, t) * noise_factor(c, t);
            const std::int64_t i = row(k);
            shape(c, t) = nb_shape_part(i, psi, load(c, t));
            nb(c, t) = std::isnan(r(c, t)) ? neg_inf : nb_term(i, r(c, t), psi, load(c, t), shape(c, t));
            pois(c, t) = poisson_term(panel.cases(c, t), expected(c, t));
        }
    }
}

LikelihoodTerms ChainState::terms() const
{
    ModelParams copy = p;
    for (int c = 0; c < n_comp; ++c) {
        copy.latent[static_cast<std::size_t>(c)] = infections.row(c).transpose();
    }
    return {nb.sum(), pois.sum(), log_prior(copy, priors)};
}

} // namespace detail

LikelihoodTerms log_likelihood_terms(const ModelParams& params, const Panel& panel, const PriorConfig& priors)
{
    const detail::ChainState state(panel, priors, params);
    return {state.nb.sum(), state.pois.sum(), log_prior(params, priors)};
}

double log_likelihood(const ModelParams& params, const Panel& panel, const PriorConfig& priors)
{
    return log_likelihood_terms(params, panel, priors).total();
}

} // namespace superspread
