#pragma once

#include "superspread/inference.hpp"

#include <cmath>
#include <limits>

namespace superspread::detail
{

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

double log_factorial(std::int64_t n);

double normal_lpdf(double x, double mean, double sd);
/// Normal restricted to (lower, upper], normalized.
double truncated_normal_lpdf(double x, double mean, double sd, double lower,
                             double upper = std::numeric_limits<double>::infinity());

/// log Gamma(x + n) - log Gamma(x) for x > 0.
inline double lgamma_ratio(double x, std::int64_t n)
{
    if (n == 0) {
        return 0.0;
    }
    if (n <= 8) {
        double product = x;
        for (std::int64_t m = 1; m < n; ++m) {
            product *= x + static_cast<double>(m);
        }
        return std::log(product);
    }
    int sign = 0;
    return ::lgamma_r(x + static_cast<double>(n), &sign) - ::lgamma_r(x, &sign);
}

/// Load-dependent part of the NB term: lgamma(i + psi L) - lgamma(psi L) - lgamma(i + 1).
inline double nb_shape_part(std::int64_t i, double psi, double load)
{
    if (load <= 0) {
        return 0.0;
    }
    return lgamma_ratio(psi * load, i) - log_factorial(i);
}

/// NB(i; R L, psi L) given its shape part.
inline double nb_term(std::int64_t i, double r, double psi, double load, double shape_part)
{
    if (load <= 0) {
        return i == 0 ? 0.0 : neg_inf;
    }
    if (!(r > 0)) {
        return neg_inf;
    }
    const double t0 = -std::log1p(r / psi);
    const double t1 = i == 0 ? 0.0 : static_cast<double>(i) * -std::log1p(psi / r);
    return shape_part + psi * load * t0 + t1;
}

inline double poisson_term(std::int64_t c, double expected)
{
    if (expected <= 0) {
        return c == 0 ? 0.0 : neg_inf;
    }
    return static_cast<double>(c) * std::log(expected) - expected - log_factorial(c);
}

/// Caches every per-(compartment, day) quantity the sampler needs so single-node updates only
/// touch the affected terms. Window day t sits at latent index init_days + t.
class ChainState
{
public:
    ChainState(const Panel& panel, const PriorConfig& priors, ModelParams params);

    /// Recomputes delays and every cache from the parameter state.
    void refresh();
    LikelihoodTerms terms() const;

    double covariate_multiplier_at(int c, int t, const Eigen::MatrixXd& beta) const;
    double noise_factor(int c, int t) const;

    const Panel& panel;
    const PriorConfig& priors;
    ModelParams p;

    int n_comp = 0;
    int init = 0;
    int days = 0;
    bool noise_on = false;

    Delay generation;
    Delay incubation;
    /// Loads / expected values below these are exact zeros that drifted through incremental updates.
    double load_tol = 0;
    double expected_tol = 0;

    CountMatrix infections;
    RowMatrix load;
    RowMatrix expected;
    RowMatrix cov_mult;
    RowMatrix r;
    RowMatrix shape;
    RowMatrix nb;
    RowMatrix pois;

    std::vector<int> cov_location;
    std::vector<int> age;
    std::vector<int> location;
    /// Compartments per age group / per effect location.
    std::vector<std::vector<int>> by_age;
    std::vector<std::vector<int>> by_location;

private:
    void check_dimensions() const;
};

double delay_tolerance(const Delay& delay);

} // namespace superspread::detail
