#pragma once

#include "superspread/common.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

namespace superspread
{

/// Discrete delay over integer lags 1..max_lag(). Coefficient i of `pmf` is the mass at lag i + 1.
template <typename Scalar = double>
struct DelayDistribution
{
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Scalar mean = 0;
    Scalar sd = 0;
    Vector pmf;

    int max_lag() const { return static_cast<int>(pmf.size()); }

    /// Mass at `lag`; zero outside 1..max_lag().
    Scalar at(int lag) const { return lag >= 1 && lag <= max_lag() ? pmf(lag - 1) : Scalar(0); }

    Scalar pmf_mean() const
    {
        return (Vector::LinSpaced(pmf.size(), Scalar(1), Scalar(pmf.size())).array() * pmf.array()).sum();
    }
};

using Delay = DelayDistribution<double>;

/// Gamma law with the given mean and sd (shape = (mean/sd)^2, scale = sd^2/mean), discretized on
/// unit intervals centred at each lag: lag 1 takes [0, 1.5), lag l takes [l - 0.5, l + 0.5).
/// Renormalized over 1..l_max.
template <typename Scalar>
DelayDistribution<Scalar> discretize_gamma(Scalar mean, Scalar sd, int l_max)
{
    using std::ceil;
    if (!(mean > 0) || !(sd > 0)) {
        throw InvalidParameterError("gamma delay needs mean > 0 and sd > 0");
    }
    if (Scalar(l_max) < ceil(mean + 4 * sd)) {
        throw TruncationError("max lag " + std::to_string(l_max) + " below ceil(mean + 4 sd)");
    }
    DelayDistribution<Scalar> out{mean, sd, DelayDistribution<Scalar>::Vector::Zero(l_max)};
    const Scalar shape = (mean / sd) * (mean / sd);
    const Scalar scale = sd * sd / mean;
    if (shape > Scalar(1e8)) {
        // igamma loses all precision here; the law is a point mass for any practical purpose
        const int lag = std::clamp(static_cast<int>(std::lround(mean)), 1, l_max);
        out.pmf(lag - 1) = 1;
        return out;
    }
    auto cdf = [&](Scalar x) { return Eigen::numext::igamma(shape, x / scale); };
    Scalar lower = 0;
    for (int lag = 1; lag <= l_max; ++lag) {
        const Scalar upper = cdf(Scalar(lag) + Scalar(0.5));
        out.pmf(lag - 1) = std::max(upper - lower, Scalar(0));
        lower = upper;
    }
    const Scalar total = out.pmf.sum();
    if (!(total > 0)) {
        throw NumericalError("gamma discretization lost all mass");
    }
    out.pmf /= total;
    return out;
}

/// Delay putting all mass on `lag`, padded with zeros up to `l_max`.
Delay point_mass_delay(int lag, int l_max);
/// Delay from explicit masses at lags 1..n (renormalized).
Delay delay_from_masses(const Eigen::VectorXd& masses);

// ---- Negative binomial / Poisson kernels -------------------------------------

/// log NB(count; mean, dispersion) with variance mean * (1 + mean / dispersion).
/// mean == 0 is the point mass at zero.
double nb_logpmf(std::int64_t count, double mean, double dispersion);
double poisson_logpmf(std::int64_t count, double mean);

/// Gamma-Poisson mixture draw.
std::int64_t nb_sample(double mean, double dispersion, Rng& rng);
std::int64_t poisson_sample(double mean, Rng& rng);

// ---- Offspring statistics ----------------------------------------------------

struct OffspringSummary
{
    double r_mean = 0;
    double dispersion = 0;
    double zero_fraction = 0;
    double infecting_ratio = 0;
    /// Share of all secondary infections produced by the most infectious `q` of primary cases.
    double top_share = 0;
    double q = 0;
    double variance_mean_ratio = 0;
    bool degenerate = false;
};

OffspringSummary offspring_summary(double r_mean, double dispersion, double q = 0.2);

struct MixtureDispersion
{
    double variance_mean_ratio = 0;
    /// NaN when the mixture is not overdispersed.
    double equivalent_dispersion = 0;
    bool underdispersed = false;
};

/// Equal-mean NB mixture: variance = sum_a w_a * m * (1 + m / psi_a), psi_eq = m^2 / (variance - m).
MixtureDispersion mixture_equivalent_dispersion(std::span<const double> weights, std::span<const double> dispersions,
                                                double r_mean);
/// Inverse map from a variance/mean ratio to the NB dispersion with the same ratio at `r_mean`.
MixtureDispersion equivalent_dispersion_from_ratio(double variance_mean_ratio, double r_mean);

// ---- Delay-derived quantities ------------------------------------------------

/// P(generation time < incubation period) for independent delays, ties split evenly.
double presymptomatic_fraction(const Delay& generation, const Delay& incubation);

/// pmf over signed integer lags starting at `min_lag`.
struct SignedPmf
{
    int min_lag = 0;
    Eigen::VectorXd pmf;

    int max_lag() const { return min_lag + static_cast<int>(pmf.size()) - 1; }
    double at(int lag) const
    {
        const int i = lag - min_lag;
        return i >= 0 && i < pmf.size() ? pmf(i) : 0.0;
    }
    double mean() const;
};

/// Serial interval G + S2 - S1 with G ~ generation, S1, S2 ~ incubation, all independent.
SignedPmf serial_interval(const Delay& generation, const Delay& incubation);

} // namespace superspread
