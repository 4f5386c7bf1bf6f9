#pragma once

#include "superspread/common.hpp"
#include "superspread/distributions.hpp"
#include "superspread/effects.hpp"

#include <vector>

namespace superspread
{

inline constexpr int default_max_lag = 21;

/// Full parameter state of the renewal model. Latent infections, when present, cover
/// `init_days` seeded days followed by the observation window.
struct ModelParams
{
    EffectSet effects;
    /// Per age group, aligned with effects.age_groups.
    Eigen::VectorXd dispersion;
    double reporting_rate = 0.25;
    double generation_mean = 5.5;
    double generation_sd = 2.0;
    double incubation_mean = 5.5;
    double incubation_sd = 2.0;
    int max_lag = default_max_lag;
    /// Expected total infections over the seeded days.
    double init_mean = 4.0;
    int init_days = 6;
    std::vector<Counts> latent;

    Delay generation() const { return discretize_gamma(generation_mean, generation_sd, max_lag); }
    Delay incubation() const { return discretize_gamma(incubation_mean, incubation_sd, max_lag); }

    std::size_t compartment_count() const { return effects.compartments.size(); }
    double dispersion_of(std::size_t compartment) const
    {
        return dispersion(effects.compartment_age[compartment]);
    }
};

/// Default parameters for a set of compartments: R0 = 1, beta = 0, psi = 1, no noise, no latent state.
ModelParams make_params(std::vector<CompartmentKey> compartments, std::vector<std::string> covariates);

} // namespace superspread
