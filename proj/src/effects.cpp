#include "superspread/effects.hpp"

#include <algorithm>
#include <cmath>

namespace superspread
{

std::string_view to_string(CovariateKind kind)
{
    switch (kind) {
    case CovariateKind::Dummy:
        return "dummy";
    case CovariateKind::Real:
        return "real";
    case CovariateKind::Standardized:
        return "standardized";
    }
    return "real";
}

CovariateKind parse_covariate_kind(std::string_view text)
{
    if (text == "dummy") {
        return CovariateKind::Dummy;
    }
    if (text == "real") {
        return CovariateKind::Real;
    }
    if (text == "standardized") {
        return CovariateKind::Standardized;
    }
    throw DataValidationError("unknown covariate kind '" + std::string(text) + "'");
}

int CovariatePanel::covariate_index(std::string_view name) const
{
    auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

int CovariatePanel::location_index(std::string_view location) const
{
    auto it = std::find(locations.begin(), locations.end(), location);
    return it == locations.end() ? -1 : static_cast<int>(it - locations.begin());
}

void CovariatePanel::validate() const
{
    if (kinds.size() != names.size() || stats.size() != names.size()) {
        throw DataValidationError("covariate metadata does not match covariate names");
    }
    if (values.size() != locations.size()) {
        throw DataValidationError("covariate values missing for some locations");
    }
    for (std::size_t l = 0; l < locations.size(); ++l) {
        const auto& m = values[l];
        if (m.rows() != n_days || m.cols() != size()) {
            throw DataValidationError("covariate matrix for location '" + locations[l] + "' has wrong shape");
        }
        for (Index d = 0; d < m.rows(); ++d) {
            for (Index j = 0; j < m.cols(); ++j) {
                const double v = m(d, j);
                if (!std::isfinite(v)) {
                    throw DataValidationError("missing covariate '" + names[static_cast<std::size_t>(j)] +
                                              "' for location '" + locations[l] + "' on " +
                                              format_date(start + static_cast<int>(d)));
                }
                if (kinds[static_cast<std::size_t>(j)] == CovariateKind::Dummy && v != 0.0 && v != 1.0) {
                    throw DataValidationError("dummy covariate '" + names[static_cast<std::size_t>(j)] +
                                              "' takes value outside {0, 1}");
                }
            }
        }
    }
}

CovariatePanel standardize_with(const CovariatePanel& panel, std::string_view covariate, Standardization stats)
{
    const int j = panel.covariate_index(covariate);
    if (j < 0) {
        throw DataValidationError("unknown covariate '" + std::string(covariate) + "'");
    }
    if (!(stats.sd > 0)) {
        throw DataValidationError("covariate '" + std::string(covariate) + "' is degenerate (sd = 0)");
    }
    CovariatePanel out = panel;
    for (auto& m : out.values) {
        m.col(j) = ((m.col(j).array() - stats.mean) / stats.sd).matrix();
    }
    out.kinds[static_cast<std::size_t>(j)] = CovariateKind::Standardized;
    out.stats[static_cast<std::size_t>(j)] = stats;
    return out;
}

CovariatePanel standardize(const CovariatePanel& panel, std::string_view covariate)
{
    const int j = panel.covariate_index(covariate);
    if (j < 0) {
        throw DataValidationError("unknown covariate '" + std::string(covariate) + "'");
    }
    if (panel.kinds[static_cast<std::size_t>(j)] == CovariateKind::Dummy) {
        throw DataValidationError("dummy covariate '" + std::string(covariate) + "' cannot be standardized");
    }
    double sum = 0;
    double count = 0;
    for (const auto& m : panel.values) {
        sum += m.col(j).sum();
        count += static_cast<double>(m.rows());
    }
    if (count < 2) {
        throw DataValidationError("covariate '" + std::string(covariate) + "' has fewer than two observations");
    }
    const double mean = sum / count;
    double ss = 0;
    for (const auto& m : panel.values) {
        ss += (m.col(j).array() - mean).square().sum();
    }
    // population sd, so the standardized sample has sd exactly 1 under the same convention
    const double sd = std::sqrt(ss / count);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        throw DataValidationError("covariate '" + std::string(covariate) + "' is degenerate (sd = 0)");
    }
    return standardize_with(panel, covariate, Standardization{mean, sd});
}

EffectSet EffectSet::for_compartments(std::vector<CompartmentKey> compartments, std::vector<std::string> covariates)
{
    EffectSet e;
    e.compartments = std::move(compartments);
    e.covariates = std::move(covariates);
    for (const auto& key : e.compartments) {
        if (std::find(e.age_groups.begin(), e.age_groups.end(), key.age_group) == e.age_groups.end()) {
            e.age_groups.push_back(key.age_group);
        }
        if (std::find(e.locations.begin(), e.locations.end(), key.location) == e.locations.end()) {
            e.locations.push_back(key.location);
        }
    }
    for (std::size_t i = 0; i < e.compartments.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            if (e.compartments[k] == e.compartments[i]) {
                throw DataValidationError("duplicate compartment " + to_string(e.compartments[i]));
            }
        }
        e.compartment_age.push_back(e.age_index(e.compartments[i].age_group));
        e.compartment_location.push_back(e.location_index(e.compartments[i].location));
    }
    const auto n = static_cast<Index>(e.compartments.size());
    e.r0 = Eigen::VectorXd::Ones(n);
    e.beta = Eigen::MatrixXd::Zero(static_cast<Index>(e.age_groups.size()), static_cast<Index>(e.covariates.size()));
    return e;
}

int EffectSet::age_index(AgeGroup age) const
{
    auto it = std::find(age_groups.begin(), age_groups.end(), age);
    return it == age_groups.end() ? -1 : static_cast<int>(it - age_groups.begin());
}

int EffectSet::location_index(std::string_view location) const
{
    auto it = std::find(locations.begin(), locations.end(), location);
    return it == locations.end() ? -1 : static_cast<int>(it - locations.begin());
}

int EffectSet::compartment_index(const CompartmentKey& key) const
{
    auto it = std::find(compartments.begin(), compartments.end(), key);
    return it == compartments.end() ? -1 : static_cast<int>(it - compartments.begin());
}

void EffectSet::validate_against(const CovariatePanel& panel) const
{
    if (panel.names != covariates) {
        throw DataValidationError("effect covariates do not match the covariate panel");
    }
    for (Index a = 0; a < beta.rows(); ++a) {
        for (Index j = 0; j < beta.cols(); ++j) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (const auto& m : panel.values) {
                if (m.rows() > 0) {
                    lo = std::min(lo, m.col(j).minCoeff());
                    hi = std::max(hi, m.col(j).maxCoeff());
                }
            }
            if (lo > hi) {
                continue;
            }
            const double worst = std::min(1.0 + beta(a, j) * lo, 1.0 + beta(a, j) * hi);
            if (!(worst > 0)) {
                throw NonPositiveRateError(covariates[static_cast<std::size_t>(j)], worst);
            }
        }
    }
    if (has_noise() && (noise.array() <= -1.0).any()) {
        throw NonPositiveRateError("noise", 1.0 + noise.minCoeff());
    }
}

double reproductive_number(const EffectSet& effects, const CovariatePanel& panel, const CompartmentKey& key, int day)
{
    const int c = effects.compartment_index(key);
    if (c < 0) {
        throw DataValidationError("unknown compartment " + to_string(key));
    }
    const int loc = panel.location_index(key.location);
    if (loc < 0 || day < 0 || day >= panel.n_days) {
        throw DataValidationError("no covariates for " + to_string(key) + " on day " + std::to_string(day));
    }
    const auto a = effects.compartment_age[static_cast<std::size_t>(c)];
    const auto x = panel.row(loc, day);
    double r = effects.r0(c);
    for (Index j = 0; j < x.size(); ++j) {
        const double factor = 1.0 + effects.beta(a, j) * x(j);
        if (!(factor > 0)) {
            throw NonPositiveRateError(panel.names[static_cast<std::size_t>(j)], factor);
        }
        r *= factor;
    }
    if (effects.has_noise()) {
        const int el = effects.compartment_location[static_cast<std::size_t>(c)];
        const double factor = 1.0 + effects.noise(el, day);
        if (!(factor > 0)) {
            throw NonPositiveRateError("noise", factor);
        }
        r *= factor;
    }
    return r;
}

Eigen::VectorXd total_effect(const EffectSet& effects, const CovariatePanel& panel,
                             std::span<const std::string> group, const Eigen::VectorXd& age_weights)
{
    if (group.empty()) {
        throw InvalidParameterError("total effect needs a non-empty covariate group");
    }
    if (age_weights.size() != static_cast<Index>(effects.age_groups.size()) || !(age_weights.sum() > 0)) {
        throw InvalidParameterError("age weights must align with the effect set's age groups");
    }
    std::vector<int> columns;
    for (const auto& name : group) {
        const int j = panel.covariate_index(name);
        if (j < 0) {
            throw DataValidationError("covariate '" + name + "' not present in panel");
        }
        columns.push_back(j);
    }
    const Eigen::VectorXd w = age_weights / age_weights.sum();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(panel.n_days);
    for (const auto& m : panel.values) {
        for (int d = 0; d < panel.n_days; ++d) {
            double day_value = 0;
            for (Index a = 0; a < w.size(); ++a) {
                double product = 1.0;
                for (int j : columns) {
                    product *= 1.0 + effects.beta(a, j) * m(d, j);
                }
                day_value += w(a) * product;
            }
            out(d) += day_value;
        }
    }
    return out / static_cast<double>(panel.values.size());
}

TracingEffect individual_tracing_effect(double beta_trace, double reporting_rate)
{
    if (!(reporting_rate > 0 && reporting_rate <= 1)) {
        throw InvalidParameterError("reporting rate must lie in (0, 1]");
    }
    TracingEffect out;
    if (beta_trace >= 0) {
        out.no_protective_effect = true;
        return out;
    }
    const double raw = -beta_trace / reporting_rate;
    out.truncated = raw > 1.0;
    out.reduction = std::min(1.0, raw);
    return out;
}

Eigen::VectorXd rolling_mean_circular(const Eigen::VectorXd& series, int window)
{
    const auto n = series.size();
    if (window <= 1 || n == 0) {
        return series;
    }
    Eigen::VectorXd out(n);
    const int back = window / 2;
    for (Index i = 0; i < n; ++i) {
        double sum = 0;
        for (int k = 0; k < window; ++k) {
            Index idx = (i - back + k) % n;
            if (idx < 0) {
                idx += n;
            }
            sum += series(idx);
        }
        out(i) = sum / window;
    }
    return out;
}

SeasonalSeries seasonal_extrapolation(const EffectSet& effects, const CovariatePanel& panel,
                                      const Climatology& climatology, const Eigen::VectorXd& age_weights, int window,
                                      std::string_view temperature_name, std::string_view humidity_name)
{
    constexpr Index year = 365;
    if (climatology.temperature.size() != year || climatology.humidity.size() != year ||
        !climatology.temperature.allFinite() || !climatology.humidity.allFinite()) {
        throw DataValidationError("climatology must cover all 365 days of the year");
    }
    if (age_weights.size() != static_cast<Index>(effects.age_groups.size()) || !(age_weights.sum() > 0)) {
        throw InvalidParameterError("age weights must align with the effect set's age groups");
    }
    struct Term
    {
        int column;
        const Eigen::VectorXd* raw;
        std::optional<Standardization> stats;
    };
    std::vector<Term> terms;
    for (auto [name, series] : {std::pair{temperature_name, &climatology.temperature},
                                std::pair{humidity_name, &climatology.humidity}}) {
        const int j = panel.covariate_index(name);
        if (j < 0) {
            continue;
        }
        std::optional<Standardization> stats;
        if (panel.kinds[static_cast<std::size_t>(j)] == CovariateKind::Standardized) {
            stats = panel.stats[static_cast<std::size_t>(j)];
            if (!stats) {
                throw DataValidationError("standardized covariate '" + std::string(name) + "' lacks stored stats");
            }
        }
        terms.push_back({j, series, stats});
    }
    const Eigen::VectorXd w = age_weights / age_weights.sum();
    SeasonalSeries out;
    out.multiplier = Eigen::VectorXd::Zero(year);
    for (Index d = 0; d < year; ++d) {
        for (Index a = 0; a < w.size(); ++a) {
            double product = 1.0;
            for (const auto& t : terms) {
                const double raw = (*t.raw)(d);
                const double x = t.stats ? t.stats->apply(raw) : raw;
                product *= 1.0 + effects.beta(a, t.column) * x;
            }
            out.multiplier(d) += w(a) * product;
        }
    }
    out.smoothed = rolling_mean_circular(out.multiplier, window);
    out.peak_ratio = out.smoothed.maxCoeff() / out.smoothed.minCoeff();
    return out;
}

} // namespace superspread
