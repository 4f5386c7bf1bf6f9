#pragma once

#include "superspread/common.hpp"

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace superspread
{

enum class CovariateKind
{
    Dummy,
    Real,
    Standardized,
};

std::string_view to_string(CovariateKind kind);
CovariateKind parse_covariate_kind(std::string_view text);

struct Standardization
{
    double mean = 0;
    double sd = 1;

    double apply(double raw) const { return (raw - mean) / sd; }
};

/// Location-level daily covariates over a common window. values[l] is (days x covariates).
struct CovariatePanel
{
    Day start{};
    int n_days = 0;
    std::vector<std::string> locations;
    std::vector<std::string> names;
    std::vector<CovariateKind> kinds;
    std::vector<std::optional<Standardization>> stats;
    std::vector<Eigen::MatrixXd> values;

    Index size() const { return static_cast<Index>(names.size()); }
    /// -1 when absent.
    int covariate_index(std::string_view name) const;
    int location_index(std::string_view location) const;
    /// Covariate row at window day `day` (0-based) for location index `loc`.
    auto row(int loc, int day) const { return values[static_cast<std::size_t>(loc)].row(day); }

    /// Dummy entries in {0, 1}, shapes consistent, no NaN. Throws DataValidationError naming the gap.
    void validate() const;
};

/// New panel with `covariate` replaced by (x - mean) / sd over the whole panel.
CovariatePanel standardize(const CovariatePanel& panel, std::string_view covariate);
/// Re-applies previously estimated statistics (out-of-sample use). Values must be raw.
CovariatePanel standardize_with(const CovariatePanel& panel, std::string_view covariate, Standardization stats);

/// R0 per compartment, beta per (age group, covariate), optional multiplicative noise per (location, day).
struct EffectSet
{
    std::vector<CompartmentKey> compartments;
    std::vector<AgeGroup> age_groups;
    std::vector<std::string> locations;
    std::vector<std::string> covariates;

    Eigen::VectorXd r0;
    /// (age groups x covariates)
    Eigen::MatrixXd beta;
    /// (locations x days); empty when the noise term is off.
    Eigen::MatrixXd noise;
    double noise_sd = 0;

    /// Per compartment: index into age_groups / locations.
    std::vector<int> compartment_age;
    std::vector<int> compartment_location;

    /// Builds index tables from compartments; age groups and locations keep first-seen order.
    static EffectSet for_compartments(std::vector<CompartmentKey> compartments, std::vector<std::string> covariates);

    int age_index(AgeGroup age) const;
    int location_index(std::string_view location) const;
    int compartment_index(const CompartmentKey& key) const;
    bool has_noise() const { return noise.size() > 0; }

    /// Throws NonPositiveRateError if some (1 + beta * x) factor is <= 0 over the panel's observed range.
    void validate_against(const CovariatePanel& panel) const;
};

/// prod_j (1 + beta_j x_j); NaN if any factor is <= 0.
template <typename BetaRow, typename CovariateRow>
double covariate_multiplier(const Eigen::MatrixBase<BetaRow>& beta, const Eigen::MatrixBase<CovariateRow>& x)
{
    double product = 1.0;
    for (Index j = 0; j < beta.size(); ++j) {
        const double factor = 1.0 + beta(j) * x(j);
        if (!(factor > 0)) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        product *= factor;
    }
    return product;
}

/// R = R0 * prod_j (1 + beta_j x_j) * (1 + noise) for compartment `key` on window day `day`.
double reproductive_number(const EffectSet& effects, const CovariatePanel& panel, const CompartmentKey& key, int day);

/// Per-day multiplier prod_{j in group} (1 + beta_j x_j), averaged over locations and weighted over age groups.
/// `age_weights` is aligned with effects.age_groups and normalized internally.
Eigen::VectorXd total_effect(const EffectSet& effects, const CovariatePanel& panel,
                             std::span<const std::string> group, const Eigen::VectorXd& age_weights);

struct TracingEffect
{
    double reduction = 0;
    bool truncated = false;
    bool no_protective_effect = false;
};

/// Extrapolates the traced-ratio effect to an individual: min(1, -beta / reporting_rate).
TracingEffect individual_tracing_effect(double beta_trace, double reporting_rate);

/// Daily climatology over a full year (365 days).
struct Climatology
{
    Eigen::VectorXd temperature;
    Eigen::VectorXd humidity;
};

struct SeasonalSeries
{
    Eigen::VectorXd multiplier;
    Eigen::VectorXd smoothed;
    double peak_ratio = 1;
};

/// Weather-only multiplier over the year: covariates named `temperature_name` / `humidity_name` are taken from
/// the climatology, standardized with the panel's stored statistics when the panel marks them standardized.
/// Smoothed with a circular centred rolling mean of `window` days. Missing weather covariates contribute 1.
SeasonalSeries seasonal_extrapolation(const EffectSet& effects, const CovariatePanel& panel,
                                      const Climatology& climatology, const Eigen::VectorXd& age_weights,
                                      int window = 14, std::string_view temperature_name = "temperature",
                                      std::string_view humidity_name = "humidity");

Eigen::VectorXd rolling_mean_circular(const Eigen::VectorXd& series, int window);

} // namespace superspread
