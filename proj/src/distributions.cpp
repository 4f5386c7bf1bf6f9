#include "superspread/distributions.hpp"

#include <limits>
#include <numeric>

namespace superspread
{

namespace
{

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

void check_nb(double mean, double dispersion)
{
    if (!(dispersion > 0)) {
        throw InvalidParameterError("negative binomial dispersion must be > 0");
    }
    if (!(mean >= 0)) {
        throw InvalidParameterError("negative binomial mean must be >= 0");
    }
}

} // namespace

Delay point_mass_delay(int lag, int l_max)
{
    if (lag < 1 || lag > l_max) {
        throw InvalidParameterError("point mass lag outside 1..l_max");
    }
    Delay d{static_cast<double>(lag), 0.0, Eigen::VectorXd::Zero(l_max)};
    d.pmf(lag - 1) = 1.0;
    return d;
}

Delay delay_from_masses(const Eigen::VectorXd& masses)
{
    if (masses.size() == 0 || (masses.array() < 0).any() || !(masses.sum() > 0)) {
        throw InvalidParameterError("delay masses must be non-negative with positive total");
    }
    Delay d{0.0, 0.0, masses / masses.sum()};
    d.mean = d.pmf_mean();
    const Eigen::ArrayXd lags = Eigen::ArrayXd::LinSpaced(masses.size(), 1.0, static_cast<double>(masses.size()));
    d.sd = std::sqrt(((lags - d.mean).square() * d.pmf.array()).sum());
    return d;
}

double nb_logpmf(std::int64_t count, double mean, double dispersion)
{
    check_nb(mean, dispersion);
    if (count < 0) {
        return neg_inf;
    }
    if (mean == 0) {
        return count == 0 ? 0.0 : neg_inf;
    }
    const double k = static_cast<double>(count);
    // log(psi / (psi + mu)) written to stay accurate when psi >> mu
    const double log_p0 = -std::log1p(mean / dispersion);
    const double log_p1 = std::log(mean) - std::log(mean + dispersion);
    return std::lgamma(k + dispersion) - std::lgamma(dispersion) - std::lgamma(k + 1) + dispersion * log_p0 +
           k * log_p1;
}

double poisson_logpmf(std::int64_t count, double mean)
{
    if (!(mean >= 0)) {
        throw InvalidParameterError("Poisson mean must be >= 0");
    }
    if (count < 0) {
        return neg_inf;
    }
    if (mean == 0) {
        return count == 0 ? 0.0 : neg_inf;
    }
    const double k = static_cast<double>(count);
    return k * std::log(mean) - mean - std::lgamma(k + 1);
}

std::int64_t poisson_sample(double mean, Rng& rng)
{
    if (!(mean >= 0)) {
        throw InvalidParameterError("Poisson mean must be >= 0");
    }
    if (mean == 0) {
        return 0;
    }
    return std::poisson_distribution<std::int64_t>(mean)(rng);
}

std::int64_t nb_sample(double mean, double dispersion, Rng& rng)
{
    check_nb(mean, dispersion);
    if (mean == 0) {
        return 0;
    }
    const double rate = std::gamma_distribution<double>(dispersion, mean / dispersion)(rng);
    return poisson_sample(rate, rng);
}

OffspringSummary offspring_summary(double r_mean, double dispersion, double q)
{
    check_nb(r_mean, dispersion);
    if (!(q > 0 && q < 1)) {
        throw InvalidParameterError("quantile fraction q must lie in (0, 1)");
    }
    OffspringSummary out;
    out.r_mean = r_mean;
    out.dispersion = dispersion;
    out.q = q;
    out.variance_mean_ratio = 1.0 + r_mean / dispersion;
    if (r_mean == 0) {
        out.zero_fraction = 1.0;
        out.infecting_ratio = 0.0;
        out.top_share = 0.0;
        out.degenerate = true;
        return out;
    }

    // Enumerate the pmf by the ratio recursion until the tail holds < 1e-10.
    const double log_p0 = -dispersion * std::log1p(r_mean / dispersion);
    const double ratio = r_mean / (r_mean + dispersion);
    std::vector<double> pmf{std::exp(log_p0)};
    double cumulative = pmf.front();
    constexpr std::size_t hard_cap = 50'000'000;
    while (cumulative < 1.0 - 1e-10) {
        const double k = static_cast<double>(pmf.size() - 1);
        const double next = pmf.back() * (k + dispersion) / (k + 1) * ratio;
        pmf.push_back(next);
        cumulative += next;
        if (pmf.size() > hard_cap) {
            throw NumericalError("offspring pmf enumeration did not converge");
        }
    }

    out.zero_fraction = pmf.front();
    out.infecting_ratio = 1.0 - out.zero_fraction;

    // Most infectious first; the boundary count contributes only the mass needed to reach q.
    double mass = 0;
    double offspring = 0;
    for (std::size_t k = pmf.size(); k-- > 0;) {
        const double take = std::min(pmf[k], q - mass);
        mass += take;
        offspring += take * static_cast<double>(k);
        if (mass >= q) {
            break;
        }
    }
    out.top_share = offspring / r_mean;
    return out;
}

MixtureDispersion equivalent_dispersion_from_ratio(double variance_mean_ratio, double r_mean)
{
    if (!(r_mean > 0)) {
        throw InvalidParameterError("equivalent dispersion needs a positive mean");
    }
    MixtureDispersion out;
    out.variance_mean_ratio = variance_mean_ratio;
    const double variance = variance_mean_ratio * r_mean;
    if (variance <= r_mean) {
        out.underdispersed = true;
        out.equivalent_dispersion = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.equivalent_dispersion = r_mean * r_mean / (variance - r_mean);
    return out;
}

MixtureDispersion mixture_equivalent_dispersion(std::span<const double> weights, std::span<const double> dispersions,
                                                double r_mean)
{
    if (weights.size() != dispersions.size() || weights.empty()) {
        throw InvalidParameterError("mixture weights and dispersions must be non-empty and of equal length");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
        throw InvalidParameterError("mixture weights must sum to 1");
    }
    double variance = 0;
    for (std::size_t a = 0; a < weights.size(); ++a) {
        if (!(dispersions[a] > 0) || weights[a] < 0) {
            throw InvalidParameterError("mixture components need psi > 0 and weight >= 0");
        }
        variance += weights[a] * r_mean * (1.0 + r_mean / dispersions[a]);
    }
    return equivalent_dispersion_from_ratio(variance / r_mean, r_mean);
}

double presymptomatic_fraction(const Delay& generation, const Delay& incubation)
{
    double before = 0;
    double ties = 0;
    for (int g = 1; g <= generation.max_lag(); ++g) {
        const double pg = generation.at(g);
        if (pg == 0) {
            continue;
        }
        for (int s = 1; s <= incubation.max_lag(); ++s) {
            if (g < s) {
                before += pg * incubation.at(s);
            }
            else if (g == s) {
                ties += pg * incubation.at(s);
            }
        }
    }
    return before + 0.5 * ties;
}

double SignedPmf::mean() const
{
    double m = 0;
    for (Index i = 0; i < pmf.size(); ++i) {
        m += static_cast<double>(min_lag + i) * pmf(i);
    }
    return m;
}

SignedPmf serial_interval(const Delay& generation, const Delay& incubation)
{
    const int ls = incubation.max_lag();
    const int lg = generation.max_lag();
    // S2 - S1 spans -(ls - 1)..(ls - 1)
    Eigen::VectorXd diff = Eigen::VectorXd::Zero(2 * ls - 1);
    for (int s1 = 1; s1 <= ls; ++s1) {
        for (int s2 = 1; s2 <= ls; ++s2) {
            diff(s2 - s1 + ls - 1) += incubation.at(s1) * incubation.at(s2);
        }
    }
    SignedPmf out;
    out.min_lag = 1 - (ls - 1);
    out.pmf = Eigen::VectorXd::Zero(lg + 2 * ls - 2);
    for (int g = 1; g <= lg; ++g) {
        const double pg = generation.at(g);
        if (pg == 0) {
            continue;
        }
        out.pmf.segment(g - 1, diff.size()) += pg * diff;
    }
    return out;
}

} // namespace superspread
