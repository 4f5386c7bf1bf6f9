#pragma once

#include "superspread/inference.hpp"

namespace bench
{

struct Synthetic
{
    superspread::Panel panel;
    superspread::ModelParams truth;
    superspread::SimulatedPanel simulated;
};

/// Locations x main age groups, `days` window, covariates lockdown / temperature / traced_ratio.
/// Truth: R0 = 2.5, psi = 0.5, beta = (-0.5, -0.1, -0.2) in every age group, noise sd 0.1.
Synthetic recovery_benchmark(std::uint64_t seed, int locations = 5, int days = 80);

/// The scalar parameters checked for coverage, paired with their true values.
std::vector<std::pair<std::string, double>> true_scalars(const Synthetic& s);

} // namespace bench
