#pragma once

#include "superspread/features.hpp"
#include "superspread/model.hpp"
#include "superspread/renewal.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace superspread
{

/// Prior specification. Every positive parameter gets a (truncated) normal prior.
struct PriorConfig
{
    double beta_mean = 0.0;
    double beta_sd = 0.2;
    /// sd of the per (location, day) multiplicative noise; 0 disables the noise term.
    double noise_sd = 0.1;
    double reporting_rate = 0.25;
    /// > 0 places a normal prior on the reporting rate (truncated to (0, 1]); 0 keeps it fixed.
    double reporting_rate_sd = 0.0;
    double delay_mean = 5.5;
    double delay_mean_sd = 0.1;
    double delay_sd = 2.0;
    /// Half-normal scale for the dispersion.
    double dispersion_sd = 5.0;
    double init_mean = 4.0;
    double init_sd = 4.0;
    int init_days = 6;
    double r0_mean = 2.0;
    double r0_sd = 2.0;
    int max_lag = default_max_lag;

    /// Throws ConfigError when a scale is not positive.
    void validate() const;
};

/// Initial-day infections: discretized exponential with mean init_mean / init_days per day.
double init_logpmf(std::int64_t count, double init_mean, int init_days);

/// Log density of every prior in the model, including the seeded-day infections.
double log_prior(const ModelParams& params, const PriorConfig& priors);

struct LikelihoodTerms
{
    double transmission = 0;
    double measurement = 0;
    double prior = 0;

    double total() const { return transmission + measurement + prior; }
};

/// Per-individual renewal likelihood of `params.latent` and the panel's case counts, plus priors.
/// -inf on constraint violations. Throws DataValidationError on dimension mismatches.
LikelihoodTerms log_likelihood_terms(const ModelParams& params, const Panel& panel, const PriorConfig& priors);
double log_likelihood(const ModelParams& params, const Panel& panel, const PriorConfig& priors);

/// Starting ModelParams for a panel with the prior's fixed quantities filled in.
ModelParams params_for_panel(const Panel& panel, const PriorConfig& priors);

struct McmcConfig
{
    int n_chains = 2;
    int n_burn = 10000;
    int n_keep = 10000;
    int thin = 1;
    std::uint64_t seed = 1;
    /// Blocks held at their initial value: "latent", "r0", "beta", "psi", "noise", "generation_mean",
    /// "incubation_mean", "init_mean", "reporting_rate".
    std::vector<std::string> fixed;
    bool monitor_noise = false;
    bool monitor_latent = false;
    double target_accept = 0.3;
    int adapt_batch = 50;
    /// Worker threads for chains; 0 picks min(chains, hardware threads).
    int threads = 0;
    /// Starting point. Latent infections are back-projected from cases when empty.
    std::optional<ModelParams> initial;
    /// Spread of chain starting points around `initial` (log scale for positive parameters).
    double init_jitter = 0.3;
    /// Called every `progress_every` iterations with (chain, iteration, total iterations).
    std::function<void(int, int, int)> progress;
    int progress_every = 1000;

    bool is_fixed(std::string_view block) const;
    void validate() const;
};

struct PosteriorDraws
{
    std::vector<std::string> names;
    /// One (kept draws x names) matrix per chain.
    std::vector<Eigen::MatrixXd> chains;
    int n_burn = 0;
    int n_keep = 0;
    int thin = 1;
    Eigen::VectorXd rhat;
    /// Post burn-in acceptance rate per block name.
    std::map<std::string, double> acceptance;

    std::vector<CompartmentKey> compartments;
    std::vector<AgeGroup> age_groups;
    std::vector<std::string> covariates;

    int column(std::string_view name) const;
    /// All chains stacked.
    Eigen::MatrixXd pooled() const;
};

PosteriorDraws mcmc_fit(const Panel& panel, const PriorConfig& priors, const McmcConfig& config);

/// Classic potential scale reduction over equal-length chains; 1 for constant series.
double gelman_rubin(const std::vector<Eigen::VectorXd>& chains);
/// Sample quantile, linear interpolation between order statistics (type 7).
double quantile(Eigen::VectorXd values, double p);

struct ParameterSummary
{
    std::string name;
    double mean = 0;
    double sd = 0;
    double q025 = 0;
    double q975 = 0;
    double rhat = 1;
};

/// Summary of one series split into chains.
ParameterSummary summarize_series(std::string name, const std::vector<Eigen::VectorXd>& chains);

struct OffspringRow
{
    AgeGroup age_group;
    ParameterSummary r0;
    ParameterSummary psi;
    ParameterSummary infecting_ratio;
    ParameterSummary top_share;
};

struct EffectRow
{
    AgeGroup age_group;
    std::string covariate;
    /// Percentage change in transmission for x = 1: -beta * 100.
    ParameterSummary change_pct;
};

struct PosteriorSummary
{
    std::vector<ParameterSummary> parameters;
    std::vector<OffspringRow> offspring;
    std::vector<EffectRow> effects;
};

/// Per-scalar summaries plus offspring statistics (at R = 1, top 20%) evaluated per draw.
PosteriorSummary summarize(const PosteriorDraws& draws);

/// EffectSet with R0 and beta taken from one pooled draw row.
EffectSet effects_from_draw(const PosteriorDraws& draws, const Eigen::Ref<const Eigen::RowVectorXd>& row);

// ---- Reduced-form dispersion ---------------------------------------------------

/// Variance of the growth rate i_t / L_t given load L_t.
double predicted_growth_variance(double r, double psi, double load, TransmissionVariant variant);
/// Inverse of the per-individual law: psi = r^2 / (variance * load - r). NaN when not overdispersed.
double dispersion_from_growth_variance(double r, double variance, double load);

struct GrowthObservation
{
    std::string unit;
    std::string group;
    double rate = 0;
    std::int64_t prior_count = 0;
};

struct ReducedFormEstimate
{
    std::string group;
    /// +inf when not estimable.
    double psi_hat = 0;
    double ci_low = 0;
    double ci_high = 0;
    double r_hat = 0;
    double variance = 0;
    /// Harmonic mean of the prior-week counts.
    double mean_prior_count = 0;
    int n_units = 0;
    int n_obs = 0;
    bool estimable = false;
};

/// Per group: R = mean rate, psi = R^2 / (var * mean_prior - R), bootstrap over units.
/// Observations with prior_count <= 0 are dropped. Fewer than 3 units in a group is a DataValidationError.
std::vector<ReducedFormEstimate> estimate_dispersion_reduced(const std::vector<GrowthObservation>& observations,
                                                             int bootstrap_n = 1000, std::uint64_t seed = 1,
                                                             double level = 0.95);

/// Weekly growth observations of onset counts summed per location; grouped by "all" or by month ("month").
std::vector<GrowthObservation> growth_observations(const Panel& panel, std::string_view grouping);

} // namespace superspread
