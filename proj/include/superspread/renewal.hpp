#pragma once

#include "superspread/model.hpp"

#include <optional>

namespace superspread
{

enum class TransmissionVariant
{
    /// i_t ~ NB(R_t L_t, psi L_t): independent offspring per primary case.
    PerIndividual,
    /// i_t ~ NB(R_t L_t, psi): dispersion of the aggregate, as in NB regression.
    ConstantDispersion,
};

std::string_view to_string(TransmissionVariant variant);
TransmissionVariant parse_variant(std::string_view text);

/// L_t = sum_l D_i(l) i_{t-l}. `history` runs oldest to newest and ends at day t - 1;
/// lags beyond the delay's support or before the history start contribute 0.
template <typename Derived>
double viral_load(const Eigen::MatrixBase<Derived>& history, const Delay& generation)
{
    const Index n = history.size();
    const Index lags = std::min<Index>(n, generation.max_lag());
    double load = 0;
    for (Index l = 1; l <= lags; ++l) {
        load += generation.pmf(l - 1) * static_cast<double>(history(n - l));
    }
    return load;
}

/// One transmission step under the per-individual law. load == 0 yields 0.
std::int64_t step(double load, double r_t, double dispersion, Rng& rng);
std::int64_t step_constant_dispersion(double load, double r_t, double dispersion, Rng& rng);
std::int64_t step(TransmissionVariant variant, double load, double r_t, double dispersion, Rng& rng);

/// r * sum_l D_s(l) i_{t-l}, with `t` an index into `infections`.
template <typename Derived>
double expected_cases(const Eigen::MatrixBase<Derived>& infections, const Delay& incubation, double reporting_rate,
                      Index t)
{
    if (!(reporting_rate > 0 && reporting_rate <= 1)) {
        throw InvalidParameterError("reporting rate must lie in (0, 1]");
    }
    double sum = 0;
    for (int l = 1; l <= incubation.max_lag() && t - l >= 0; ++l) {
        if (t - l < infections.size()) {
            sum += incubation.pmf(l - 1) * static_cast<double>(infections(t - l));
        }
    }
    return reporting_rate * sum;
}

/// One compartment's latent path. `infections` and `viral_load` cover seeded days then the window;
/// `r_values` covers the window only.
struct LatentTrajectory
{
    Day start_day{};
    int init_days = 0;
    Counts infections;
    Eigen::VectorXd viral_load;
    Eigen::VectorXd r_values;
    /// First window day with zero viral load (absorbing), if any.
    std::optional<int> extinction_day;
};

struct SimulatedPanel
{
    std::vector<CompartmentKey> compartments;
    Day window_start{};
    int horizon = 0;
    std::vector<LatentTrajectory> latent;
    /// (compartments x horizon)
    Eigen::MatrixXd expected_cases;
    CountMatrix sampled_cases;
    /// (locations x horizon) noise actually used; empty when off.
    Eigen::MatrixXd noise;
};

/// Forward simulation of every compartment over `horizon` window days starting at covariates.start.
/// Compartment c draws from derive_stream(seed, c); noise for location l from derive_stream(seed, 2^40 + l).
SimulatedPanel simulate(const ModelParams& params, const CovariatePanel& covariates, int horizon,
                        TransmissionVariant variant, std::uint64_t seed);

} // namespace superspread
