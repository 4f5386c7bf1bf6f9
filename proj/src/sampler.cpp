#include "chain_state.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace superspread
{

namespace
{

using detail::ChainState;
using detail::neg_inf;
using detail::RowMatrix;

const std::vector<std::string_view> block_names = {"latent", "r0", "beta", "psi", "noise",
                                                   "generation_mean", "incubation_mean", "init_mean",
                                                   "reporting_rate"};

struct Adaptive
{
    double log_scale = 0;
    int accepted = 0;
    int tried = 0;

    void record(bool ok)
    {
        ++tried;
        accepted += ok ? 1 : 0;
    }
    /// Pushes the log scale toward the target acceptance and resets the batch.
    void adapt(double target, double delta, double min_log, double max_log)
    {
        if (tried > 0) {
            log_scale += static_cast<double>(accepted) / tried > target ? delta : -delta;
            log_scale = std::clamp(log_scale, min_log, max_log);
        }
        accepted = tried = 0;
    }
};

struct BlockCounter
{
    long accepted = 0;
    long tried = 0;
};

/// Latent counts shifted back by the incubation mean and scaled by the reporting rate, at least 1 everywhere.
Counts back_project(const Panel& panel, int c, const ModelParams& p, Rng& rng)
{
    const int init = p.init_days;
    const int days = panel.n_days;
    const int shift = static_cast<int>(std::lround(p.incubation_mean));
    std::uniform_real_distribution<double> jitter(0.8, 1.2);
    Counts out(init + days);
    for (int k = 0; k < init + days; ++k) {
        const int centre = std::clamp(k - init + shift, 0, std::max(days - 1, 0));
        double sum = 0;
        int n = 0;
        for (int t = centre - 3; t <= centre + 3; ++t) {
            if (t >= 0 && t < days) {
                sum += static_cast<double>(panel.cases(c, t));
                ++n;
            }
        }
        const double level = n > 0 ? sum / n / p.reporting_rate : 0.0;
        out(k) = std::max<std::int64_t>(1, std::llround(level * jitter(rng)));
    }
    return out;
}

class Sampler
{
public:
    Sampler(ChainState state, const McmcConfig& config, Rng rng)
        : s(std::move(state))
        , config(config)
        , rng(std::move(rng))
    {
        const auto n_age = s.p.effects.age_groups.size();
        const auto n_cov = s.p.effects.covariates.size();
        free_latent = !config.is_fixed("latent");
        free_r0 = !config.is_fixed("r0");
        free_beta = !config.is_fixed("beta") && n_cov > 0;
        free_psi = !config.is_fixed("psi");
        free_noise = !config.is_fixed("noise") && s.noise_on && s.priors.noise_sd > 0;
        free_generation = !config.is_fixed("generation_mean");
        free_incubation = !config.is_fixed("incubation_mean");
        free_init = !config.is_fixed("init_mean");
        free_rate = !config.is_fixed("reporting_rate") && s.priors.reporting_rate_sd > 0;

        const int nodes = s.n_comp * (s.init + s.days);
        a_latent.assign(static_cast<std::size_t>(nodes), {});
        a_r0.assign(static_cast<std::size_t>(s.n_comp), {std::log(0.05), 0, 0});
        a_beta.assign(n_age * n_cov, {std::log(0.05), 0, 0});
        a_psi.assign(n_age, {std::log(0.2), 0, 0});
        a_noise.assign(static_cast<std::size_t>(s.p.effects.noise.size()), {std::log(0.05), 0, 0});
        a_generation = {std::log(0.05), 0, 0};
        a_incubation = {std::log(0.05), 0, 0};
        a_init = {std::log(0.2), 0, 0};
        a_rate = {std::log(0.02), 0, 0};
        order.resize(static_cast<std::size_t>(nodes));
        std::iota(order.begin(), order.end(), 0);

        const int span = std::max(s.generation.max_lag(), s.incubation.max_lag());
        new_load.resize(span + 1);
        new_shape.resize(span + 1);
        new_nb.resize(span + 1);
        new_expected.resize(span + 1);
        new_pois.resize(span + 1);
        row_r.resize(s.days);
        row_nb.resize(s.days);
        row_shape.resize(s.days);
        row_mult.resize(s.days);
    }

    void iterate(bool adapting)
    {
        this->adapting = adapting;
        if (free_latent) {
            std::shuffle(order.begin(), order.end(), rng);
            const int width = s.init + s.days;
            for (int node : order) {
                update_latent(node / width, node % width);
            }
        }
        if (free_r0) {
            for (int c = 0; c < s.n_comp; ++c) {
                update_r0(c);
            }
        }
        if (free_beta) {
            for (Index a = 0; a < s.p.effects.beta.rows(); ++a) {
                for (Index j = 0; j < s.p.effects.beta.cols(); ++j) {
                    update_beta(static_cast<int>(a), static_cast<int>(j));
                }
            }
        }
        if (free_psi) {
            for (Index a = 0; a < s.p.dispersion.size(); ++a) {
                update_psi(static_cast<int>(a));
            }
        }
        if (free_noise) {
            for (Index l = 0; l < s.p.effects.noise.rows(); ++l) {
                for (int t = 0; t < s.days; ++t) {
                    update_noise(static_cast<int>(l), t);
                }
            }
        }
        if (free_generation) {
            update_generation();
        }
        if (free_incubation) {
            update_incubation();
        }
        if (free_init) {
            update_init_mean();
        }
        if (free_rate) {
            update_reporting_rate();
        }
    }

    /// End of an adaptation batch.
    void adapt(int batch_number)
    {
        const double delta = std::min(0.3, 1.0 / std::sqrt(static_cast<double>(batch_number)));
        const double target = config.target_accept;
        for (auto& a : a_latent) {
            a.adapt(target, delta, 0.0, std::log(1e4));
        }
        for (auto* group : {&a_r0, &a_beta, &a_psi, &a_noise}) {
            for (auto& a : *group) {
                a.adapt(target, delta, -12, 3);
            }
        }
        for (auto* a : {&a_generation, &a_incubation, &a_init, &a_rate}) {
            a->adapt(target, delta, -12, 3);
        }
    }

    ChainState s;
    const McmcConfig& config;
    Rng rng;
    std::array<BlockCounter, 9> counters{};

private:
    bool accept(double delta)
    {
        if (std::isnan(delta) || delta == neg_inf) {
            return false;
        }
        return delta >= 0 || std::log(uniform(rng)) < delta;
    }

    /// `block` indexes block_names.
    void count(int block, Adaptive& a, bool ok)
    {
        a.record(ok);
        if (!adapting) {
            auto& c = counters[static_cast<std::size_t>(block)];
            ++c.tried;
            c.accepted += ok ? 1 : 0;
        }
    }

    double step(const Adaptive& a) { return std::exp(a.log_scale) * normal(rng); }

    void update_latent(int c, int k)
    {
        Adaptive& a = a_latent[static_cast<std::size_t>(c * (s.init + s.days) + k)];
        const double scale = std::exp(a.log_scale);
        std::geometric_distribution<std::int64_t> geometric(1.0 / scale);
        const std::int64_t magnitude = 1 + geometric(rng);
        const std::int64_t current = s.infections(c, k);
        const std::int64_t proposed = uniform(rng) < 0.5 ? current - magnitude : current + magnitude;
        if (proposed < 0) {
            count(0, a, false);
            return;
        }
        const double d = static_cast<double>(proposed - current);
        const double psi = s.p.dispersion(s.age[static_cast<std::size_t>(c)]);
        double delta = 0;
        double own_shape = 0;
        double own_nb = 0;
        if (k < s.init) {
            delta += init_logpmf(proposed, s.p.init_mean, s.init) - init_logpmf(current, s.p.init_mean, s.init);
        }
        else {
            const int t = k - s.init;
            own_shape = detail::nb_shape_part(proposed, psi, s.load(c, t));
            own_nb = detail::nb_term(proposed, s.r(c, t), psi, s.load(c, t), own_shape);
            delta += own_nb - s.nb(c, t);
        }
        const int width = s.init + s.days;
        const int g_max = s.generation.max_lag();
        const int s_max = s.incubation.max_lag();
        const int span = std::min(std::max(g_max, s_max), width - 1 - k);
        for (int lag = 1; lag <= span && delta != neg_inf; ++lag) {
            const int k2 = k + lag;
            if (k2 < s.init) {
                continue;
            }
            const int t2 = k2 - s.init;
            const std::int64_t i2 = s.infections(c, k2);
            if (lag <= g_max) {
                double l = s.load(c, t2) + s.generation.pmf(lag - 1) * d;
                if (l < s.load_tol) {
                    l = 0;
                }
                new_load[lag] = l;
                new_shape[lag] = detail::nb_shape_part(i2, psi, l);
                new_nb[lag] = detail::nb_term(i2, s.r(c, t2), psi, l, new_shape[lag]);
                delta += new_nb[lag] - s.nb(c, t2);
            }
            if (lag <= s_max) {
                double e = s.expected(c, t2) + s.p.reporting_rate * s.incubation.pmf(lag - 1) * d;
                if (e < s.expected_tol) {
                    e = 0;
                }
                new_expected[lag] = e;
                new_pois[lag] = detail::poisson_term(s.panel.cases(c, t2), e);
                delta += new_pois[lag] - s.pois(c, t2);
            }
        }
        const bool ok = accept(delta);
        count(0, a, ok);
        if (!ok) {
            return;
        }
        s.infections(c, k) = proposed;
        if (k >= s.init) {
            s.shape(c, k - s.init) = own_shape;
            s.nb(c, k - s.init) = own_nb;
        }
        for (int lag = 1; lag <= span; ++lag) {
            const int k2 = k + lag;
            if (k2 < s.init) {
                continue;
            }
            const int t2 = k2 - s.init;
            if (lag <= g_max) {
                s.load(c, t2) = new_load[lag];
                s.shape(c, t2) = new_shape[lag];
                s.nb(c, t2) = new_nb[lag];
            }
            if (lag <= s_max) {
                s.expected(c, t2) = new_expected[lag];
                s.pois(c, t2) = new_pois[lag];
            }
        }
    }

    /// Sum of NB terms of compartment c for candidate R row `row_r` and dispersion psi; fills row_nb.
    double compartment_nb(int c, double psi, bool new_shape_part)
    {
        double total = 0;
        for (int t = 0; t < s.days; ++t) {
            const std::int64_t i = s.infections(c, s.init + t);
            const double l = s.load(c, t);
            const double sh = new_shape_part ? detail::nb_shape_part(i, psi, l) : s.shape(c, t);
            row_shape[t] = sh;
            row_nb[t] = detail::nb_term(i, row_r[t], psi, l, sh);
            total += row_nb[t] - s.nb(c, t);
        }
        return total;
    }

    void update_r0(int c)
    {
        Adaptive& a = a_r0[static_cast<std::size_t>(c)];
        const double old_value = s.p.effects.r0(c);
        const double value = old_value * std::exp(step(a));
        const double ratio = value / old_value;
        for (int t = 0; t < s.days; ++t) {
            row_r[t] = s.r(c, t) * ratio;
        }
        const double psi = s.p.dispersion(s.age[static_cast<std::size_t>(c)]);
        double delta = compartment_nb(c, psi, false);
        delta += detail::truncated_normal_lpdf(value, s.priors.r0_mean, s.priors.r0_sd, 0.0) -
                 detail::truncated_normal_lpdf(old_value, s.priors.r0_mean, s.priors.r0_sd, 0.0) + std::log(ratio);
        const bool ok = accept(delta);
        count(1, a, ok);
        if (ok) {
            s.p.effects.r0(c) = value;
            for (int t = 0; t < s.days; ++t) {
                s.r(c, t) = row_r[t];
                s.nb(c, t) = row_nb[t];
            }
        }
    }

    void update_beta(int age, int j)
    {
        Adaptive& a = a_beta[static_cast<std::size_t>(age) * s.p.effects.covariates.size() + j];
        Eigen::MatrixXd& beta = s.p.effects.beta;
        const double old_value = beta(age, j);
        const double value = old_value + step(a);
        beta(age, j) = value;
        const auto& members = s.by_age[static_cast<std::size_t>(age)];
        scratch_r.resize(static_cast<Index>(members.size()), s.days);
        scratch_nb.resize(static_cast<Index>(members.size()), s.days);
        scratch_mult.resize(static_cast<Index>(members.size()), s.days);
        const double psi = s.p.dispersion(age);
        double delta = detail::normal_lpdf(value, s.priors.beta_mean, s.priors.beta_sd) -
                       detail::normal_lpdf(old_value, s.priors.beta_mean, s.priors.beta_sd);
        for (std::size_t m = 0; m < members.size() && delta != neg_inf; ++m) {
            const int c = members[m];
            for (int t = 0; t < s.days; ++t) {
                const double mult = s.covariate_multiplier_at(c, t, beta);
                if (std::isnan(mult)) {
                    delta = neg_inf;
                    break;
                }
                row_r[t] = s.p.effects.r0(c) * mult * s.noise_factor(c, t);
                scratch_mult(static_cast<Index>(m), t) = mult;
            }
            if (delta == neg_inf) {
                break;
            }
            delta += compartment_nb(c, psi, false);
            for (int t = 0; t < s.days; ++t) {
                scratch_r(static_cast<Index>(m), t) = row_r[t];
                scratch_nb(static_cast<Index>(m), t) = row_nb[t];
            }
        }
        const bool ok = accept(delta);
        count(2, a, ok);
        if (!ok) {
            beta(age, j) = old_value;
            return;
        }
        for (std::size_t m = 0; m < members.size(); ++m) {
            const int c = members[m];
            s.cov_mult.row(c) = scratch_mult.row(static_cast<Index>(m));
            s.r.row(c) = scratch_r.row(static_cast<Index>(m));
            s.nb.row(c) = scratch_nb.row(static_cast<Index>(m));
        }
    }

    void update_psi(int age)
    {
        Adaptive& a = a_psi[static_cast<std::size_t>(age)];
        const double old_value = s.p.dispersion(age);
        const double value = old_value * std::exp(step(a));
        const auto& members = s.by_age[static_cast<std::size_t>(age)];
        scratch_shape.resize(static_cast<Index>(members.size()), s.days);
        scratch_nb.resize(static_cast<Index>(members.size()), s.days);
        double delta = detail::truncated_normal_lpdf(value, 0.0, s.priors.dispersion_sd, 0.0) -
                       detail::truncated_normal_lpdf(old_value, 0.0, s.priors.dispersion_sd, 0.0) +
                       std::log(value / old_value);
        for (std::size_t m = 0; m < members.size(); ++m) {
            const int c = members[m];
            for (int t = 0; t < s.days; ++t) {
                row_r[t] = s.r(c, t);
            }
            delta += compartment_nb(c, value, true);
            for (int t = 0; t < s.days; ++t) {
                scratch_shape(static_cast<Index>(m), t) = row_shape[t];
                scratch_nb(static_cast<Index>(m), t) = row_nb[t];
            }
        }
        const bool ok = accept(delta);
        count(3, a, ok);
        if (!ok) {
            return;
        }
        s.p.dispersion(age) = value;
        for (std::size_t m = 0; m < members.size(); ++m) {
            s.shape.row(members[m]) = scratch_shape.row(static_cast<Index>(m));
            s.nb.row(members[m]) = scratch_nb.row(static_cast<Index>(m));
        }
    }

    void update_noise(int l, int t)
    {
        Adaptive& a = a_noise[static_cast<std::size_t>(l * s.p.effects.noise.cols() + t)];
        double& noise = s.p.effects.noise(l, t);
        const double old_value = noise;
        const double value = old_value + step(a);
        if (!(value > -1.0)) {
            count(4, a, false);
            return;
        }
        const auto& members = s.by_location[static_cast<std::size_t>(l)];
        double delta = detail::normal_lpdf(value, 0.0, s.priors.noise_sd) -
                       detail::normal_lpdf(old_value, 0.0, s.priors.noise_sd);
        for (std::size_t m = 0; m < members.size(); ++m) {
            const int c = members[m];
            const double psi = s.p.dispersion(s.age[static_cast<std::size_t>(c)]);
            const double r = s.r(c, t) * (1.0 + value) / (1.0 + old_value);
            new_nb[m] = detail::nb_term(s.infections(c, s.init + t), r, psi, s.load(c, t), s.shape(c, t));
            new_load[m] = r;
            delta += new_nb[m] - s.nb(c, t);
        }
        const bool ok = accept(delta);
        count(4, a, ok);
        if (!ok) {
            return;
        }
        noise = value;
        for (std::size_t m = 0; m < members.size(); ++m) {
            s.r(members[m], t) = new_load[m];
            s.nb(members[m], t) = new_nb[m];
        }
    }

    void update_generation()
    {
        const double old_value = s.p.generation_mean;
        const double value = old_value + step(a_generation);
        Delay generation;
        try {
            generation = discretize_gamma(value, s.p.generation_sd, s.p.max_lag);
        }
        catch (const Error&) {
            count(5, a_generation, false);
            return;
        }
        const double tol = detail::delay_tolerance(generation);
        RowMatrix load(s.n_comp, s.days), shape(s.n_comp, s.days), nb(s.n_comp, s.days);
        double delta = detail::normal_lpdf(value, s.priors.delay_mean, s.priors.delay_mean_sd) -
                       detail::normal_lpdf(old_value, s.priors.delay_mean, s.priors.delay_mean_sd);
        for (int c = 0; c < s.n_comp && delta != neg_inf; ++c) {
            const double psi = s.p.dispersion(s.age[static_cast<std::size_t>(c)]);
            for (int t = 0; t < s.days; ++t) {
                const int k = s.init + t;
                double l = 0;
                for (int lag = 1; lag <= generation.max_lag() && lag <= k; ++lag) {
                    l += generation.pmf(lag - 1) * static_cast<double>(s.infections(c, k - lag));
                }
                l = l < tol ? 0.0 : l;
                const std::int64_t i = s.infections(c, k);
                load(c, t) = l;
                shape(c, t) = detail::nb_shape_part(i, psi, l);
                nb(c, t) = detail::nb_term(i, s.r(c, t), psi, l, shape(c, t));
            }
            delta += nb.row(c).sum() - s.nb.row(c).sum();
        }
        const bool ok = accept(delta);
        count(5, a_generation, ok);
        if (ok) {
            s.p.generation_mean = value;
            s.generation = std::move(generation);
            s.load_tol = tol;
            s.load = std::move(load);
            s.shape = std::move(shape);
            s.nb = std::move(nb);
        }
    }

    void update_incubation()
    {
        const double old_value = s.p.incubation_mean;
        const double value = old_value + step(a_incubation);
        Delay incubation;
        try {
            incubation = discretize_gamma(value, s.p.incubation_sd, s.p.max_lag);
        }
        catch (const Error&) {
            count(6, a_incubation, false);
            return;
        }
        const double tol = s.p.reporting_rate * detail::delay_tolerance(incubation);
        RowMatrix expected(s.n_comp, s.days), pois(s.n_comp, s.days);
        double delta = detail::normal_lpdf(value, s.priors.delay_mean, s.priors.delay_mean_sd) -
                       detail::normal_lpdf(old_value, s.priors.delay_mean, s.priors.delay_mean_sd);
        for (int c = 0; c < s.n_comp && delta != neg_inf; ++c) {
            for (int t = 0; t < s.days; ++t) {
                const int k = s.init + t;
                double e = 0;
                for (int lag = 1; lag <= incubation.max_lag() && lag <= k; ++lag) {
                    e += incubation.pmf(lag - 1) * static_cast<double>(s.infections(c, k - lag));
                }
                e *= s.p.reporting_rate;
                expected(c, t) = e < tol ? 0.0 : e;
                pois(c, t) = detail::poisson_term(s.panel.cases(c, t), expected(c, t));
            }
            delta += pois.row(c).sum() - s.pois.row(c).sum();
        }
        const bool ok = accept(delta);
        count(6, a_incubation, ok);
        if (ok) {
            s.p.incubation_mean = value;
            s.incubation = std::move(incubation);
            s.expected_tol = tol;
            s.expected = std::move(expected);
            s.pois = std::move(pois);
        }
    }

    void update_init_mean()
    {
        const double old_value = s.p.init_mean;
        const double value = old_value * std::exp(step(a_init));
        double delta = detail::truncated_normal_lpdf(value, s.priors.init_mean, s.priors.init_sd, 0.0) -
                       detail::truncated_normal_lpdf(old_value, s.priors.init_mean, s.priors.init_sd, 0.0) +
                       std::log(value / old_value);
        for (int c = 0; c < s.n_comp; ++c) {
            for (int k = 0; k < s.init; ++k) {
                const std::int64_t i = s.infections(c, k);
                delta += init_logpmf(i, value, s.init) - init_logpmf(i, old_value, s.init);
            }
        }
        const bool ok = accept(delta);
        count(7, a_init, ok);
        if (ok) {
            s.p.init_mean = value;
        }
    }

    void update_reporting_rate()
    {
        const double old_value = s.p.reporting_rate;
        const double value = old_value + step(a_rate);
        if (!(value > 0 && value <= 1)) {
            count(8, a_rate, false);
            return;
        }
        const double ratio = value / old_value;
        RowMatrix pois(s.n_comp, s.days);
        double delta = detail::truncated_normal_lpdf(value, s.priors.reporting_rate, s.priors.reporting_rate_sd, 0.0,
                                                     1.0) -
                       detail::truncated_normal_lpdf(old_value, s.priors.reporting_rate, s.priors.reporting_rate_sd,
                                                     0.0, 1.0);
        for (int c = 0; c < s.n_comp; ++c) {
            for (int t = 0; t < s.days; ++t) {
                pois(c, t) = detail::poisson_term(s.panel.cases(c, t), s.expected(c, t) * ratio);
            }
        }
        delta += pois.sum() - s.pois.sum();
        const bool ok = accept(delta);
        count(8, a_rate, ok);
        if (ok) {
            s.p.reporting_rate = value;
            s.expected *= ratio;
            s.expected_tol *= ratio;
            s.pois = std::move(pois);
        }
    }

    bool adapting = true;
    bool free_latent = true, free_r0 = true, free_beta = true, free_psi = true, free_noise = true;
    bool free_generation = true, free_incubation = true, free_init = true, free_rate = false;

    std::vector<Adaptive> a_latent, a_r0, a_beta, a_psi, a_noise;
    Adaptive a_generation, a_incubation, a_init, a_rate;
    std::vector<int> order;

    std::vector<double> new_load, new_shape, new_nb, new_expected, new_pois;
    std::vector<double> row_r, row_nb, row_shape, row_mult;
    RowMatrix scratch_r, scratch_nb, scratch_mult, scratch_shape;

    std::normal_distribution<double> normal{0.0, 1.0};
    std::uniform_real_distribution<double> uniform{0.0, 1.0};
};

std::vector<std::string> monitored_names(const ModelParams& p, const Panel& panel, const McmcConfig& config,
                                         const PriorConfig& priors)
{
    const EffectSet& e = p.effects;
    std::vector<std::string> names;
    for (const auto& key : e.compartments) {
        names.push_back("r0[" + to_string(key) + "]");
    }
    for (const auto& age : e.age_groups) {
        for (const auto& cov : e.covariates) {
            names.push_back("beta[" + std::string(to_string(age)) + ":" + cov + "]");
        }
    }
    for (const auto& age : e.age_groups) {
        names.push_back("psi[" + std::string(to_string(age)) + "]");
    }
    names.insert(names.end(), {"generation_mean", "incubation_mean", "init_mean"});
    if (priors.reporting_rate_sd > 0) {
        names.push_back("reporting_rate");
    }
    if (config.monitor_noise && e.has_noise()) {
        for (const auto& loc : e.locations) {
            for (int t = 0; t < panel.n_days; ++t) {
                names.push_back("noise[" + loc + ":" + format_date(panel.start + t) + "]");
            }
        }
    }
    if (config.monitor_latent) {
        for (const auto& key : e.compartments) {
            for (int k = 0; k < p.init_days + panel.n_days; ++k) {
                names.push_back("latent[" + to_string(key) + ":" + format_date(panel.start + (k - p.init_days)) + "]");
            }
        }
    }
    return names;
}

void record(const ChainState& s, const McmcConfig& config, Eigen::RowVectorXd& row)
{
    const ModelParams& p = s.p;
    Index j = 0;
    for (Index c = 0; c < p.effects.r0.size(); ++c) {
        row(j++) = p.effects.r0(c);
    }
    for (Index a = 0; a < p.effects.beta.rows(); ++a) {
        for (Index k = 0; k < p.effects.beta.cols(); ++k) {
            row(j++) = p.effects.beta(a, k);
        }
    }
    for (Index a = 0; a < p.dispersion.size(); ++a) {
        row(j++) = p.dispersion(a);
    }
    row(j++) = p.generation_mean;
    row(j++) = p.incubation_mean;
    row(j++) = p.init_mean;
    if (s.priors.reporting_rate_sd > 0) {
        row(j++) = p.reporting_rate;
    }
    if (config.monitor_noise && p.effects.has_noise()) {
        for (Index l = 0; l < p.effects.noise.rows(); ++l) {
            for (int t = 0; t < s.days; ++t) {
                row(j++) = p.effects.noise(l, t);
            }
        }
    }
    if (config.monitor_latent) {
        for (int c = 0; c < s.n_comp; ++c) {
            for (int k = 0; k < s.init + s.days; ++k) {
                row(j++) = static_cast<double>(s.infections(c, k));
            }
        }
    }
}

ModelParams starting_point(const Panel& panel, const PriorConfig& priors, const McmcConfig& config, Rng& rng)
{
    const bool given = config.initial.has_value();
    ModelParams p = given ? *config.initial : params_for_panel(panel, priors);
    p.effects.noise_sd = priors.noise_sd;
    if (priors.noise_sd > 0 && !p.effects.has_noise()) {
        p.effects.noise = Eigen::MatrixXd::Zero(static_cast<Index>(p.effects.locations.size()), panel.n_days);
    }
    if (priors.noise_sd == 0) {
        p.effects.noise.resize(0, 0);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double jitter = config.init_jitter;
    if (!config.is_fixed("r0")) {
        for (Index c = 0; c < p.effects.r0.size(); ++c) {
            p.effects.r0(c) = given ? p.effects.r0(c) * std::exp(jitter * normal(rng)) : 1.0 + 2.0 * uniform(rng);
        }
    }
    if (!config.is_fixed("beta")) {
        for (Index k = 0; k < p.effects.beta.size(); ++k) {
            p.effects.beta.data()[k] += 0.05 * normal(rng);
        }
    }
    if (!config.is_fixed("psi")) {
        for (Index a = 0; a < p.dispersion.size(); ++a) {
            p.dispersion(a) = given ? p.dispersion(a) * std::exp(jitter * normal(rng))
                                    : std::exp(std::log(0.3) + uniform(rng) * std::log(10.0));
        }
    }
    if (!config.is_fixed("generation_mean")) {
        p.generation_mean += 0.5 * priors.delay_mean_sd * normal(rng);
    }
    if (!config.is_fixed("incubation_mean")) {
        p.incubation_mean += 0.5 * priors.delay_mean_sd * normal(rng);
    }
    if (!config.is_fixed("init_mean")) {
        p.init_mean = given ? p.init_mean * std::exp(jitter * normal(rng)) : 2.0 + 6.0 * uniform(rng);
    }
    if (p.latent.empty()) {
        for (int c = 0; c < static_cast<int>(panel.compartments.size()); ++c) {
            p.latent.push_back(back_project(panel, c, p, rng));
        }
    }
    return p;
}

struct ChainResult
{
    Eigen::MatrixXd draws;
    std::array<BlockCounter, 9> counters{};
};

ChainResult run_chain(const Panel& panel, const PriorConfig& priors, const McmcConfig& config, int chain,
                      const std::vector<std::string>& names, std::mutex& progress_lock)
{
    Rng rng = derive_stream(config.seed, static_cast<std::uint64_t>(chain));
    std::optional<Sampler> sampler;
    for (int attempt = 0; attempt < 100 && !sampler; ++attempt) {
        ChainState state(panel, priors, starting_point(panel, priors, config, rng));
        if (std::isfinite(state.terms().total())) {
            sampler.emplace(std::move(state), config, rng);
        }
    }
    if (!sampler) {
        throw NumericalError("chain " + std::to_string(chain) +
                             ": no finite starting point after 100 initialization attempts");
    }
    const int total = config.n_burn + config.n_keep;
    const int kept = config.n_keep / config.thin;
    ChainResult result;
    result.draws.resize(kept, static_cast<Index>(names.size()));
    Eigen::RowVectorXd buffer(static_cast<Index>(names.size()));
    int row = 0;
    int batch = 0;
    for (int it = 0; it < total; ++it) {
        const bool burning = it < config.n_burn;
        sampler->iterate(burning);
        if (burning && (it + 1) % config.adapt_batch == 0) {
            sampler->adapt(++batch);
        }
        if ((it + 1) % 50 == 0) {
            sampler->s.refresh();
        }
        if (!burning && (it - config.n_burn + 1) % config.thin == 0 && row < kept) {
            record(sampler->s, config, buffer);
            result.draws.row(row++) = buffer;
        }
        if (config.progress && (it + 1) % config.progress_every == 0) {
            std::lock_guard lock(progress_lock);
            config.progress(chain, it + 1, total);
        }
    }
    if (!std::isfinite(sampler->s.terms().total())) {
        throw NumericalError("chain " + std::to_string(chain) + " ended in a state of zero posterior density");
    }
    result.counters = sampler->counters;
    return result;
}

} // namespace

bool McmcConfig::is_fixed(std::string_view block) const
{
    return std::find(fixed.begin(), fixed.end(), block) != fixed.end();
}

void McmcConfig::validate() const
{
    if (n_chains < 2) {
        throw ConfigError("at least 2 chains are required");
    }
    if (n_burn < 0 || n_keep < 1 || thin < 1 || adapt_batch < 1) {
        throw ConfigError("burn-in must be >= 0, kept iterations and thinning >= 1");
    }
    if (!(target_accept > 0 && target_accept < 1)) {
        throw ConfigError("target acceptance must lie in (0, 1)");
    }
    for (const auto& f : fixed) {
        if (std::find(block_names.begin(), block_names.end(), f) == block_names.end()) {
            throw ConfigError("unknown parameter block '" + f + "'");
        }
    }
}

PosteriorDraws mcmc_fit(const Panel& panel, const PriorConfig& priors, const McmcConfig& config)
{
    panel.validate();
    priors.validate();
    config.validate();
    const ModelParams shape = params_for_panel(panel, priors);
    ModelParams named = config.initial ? *config.initial : shape;
    if (priors.noise_sd > 0 && !named.effects.has_noise()) {
        named.effects.noise = Eigen::MatrixXd::Zero(static_cast<Index>(named.effects.locations.size()), panel.n_days);
    }
    const auto names = monitored_names(named, panel, config, priors);

    std::vector<ChainResult> results(static_cast<std::size_t>(config.n_chains));
    std::vector<std::exception_ptr> errors(results.size());
    std::mutex progress_lock;
    int threads = config.threads > 0 ? config.threads
                                     : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, config.n_chains);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int chain = next++; chain < config.n_chains; chain = next++) {
            try {
                results[static_cast<std::size_t>(chain)] =
                    run_chain(panel, priors, config, chain, names, progress_lock);
            }
            catch (...) {
                errors[static_cast<std::size_t>(chain)] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    }
    else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    PosteriorDraws out;
    out.names = names;
    out.n_burn = config.n_burn;
    out.n_keep = config.n_keep;
    out.thin = config.thin;
    out.compartments = panel.compartments;
    out.age_groups = shape.effects.age_groups;
    out.covariates = panel.covariates.names;
    std::map<std::string, BlockCounter> totals;
    for (auto& r : results) {
        out.chains.push_back(std::move(r.draws));
        for (std::size_t b = 0; b < r.counters.size(); ++b) {
            auto& total = totals[std::string(block_names[b])];
            total.accepted += r.counters[b].accepted;
            total.tried += r.counters[b].tried;
        }
    }
    for (const auto& [block, c] : totals) {
        if (c.tried == 0) {
            continue;
        }
        out.acceptance[block] = c.tried > 0 ? static_cast<double>(c.accepted) / static_cast<double>(c.tried) : 0.0;
    }
    out.rhat.resize(static_cast<Index>(names.size()));
    for (Index j = 0; j < out.rhat.size(); ++j) {
        std::vector<Eigen::VectorXd> series;
        for (const auto& chain : out.chains) {
            series.push_back(chain.col(j));
        }
        out.rhat(j) = gelman_rubin(series);
    }
    return out;
}

} // namespace superspread
