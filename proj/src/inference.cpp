#include "superspread/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace superspread
{

int PosteriorDraws::column(std::string_view name) const
{
    auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

Eigen::MatrixXd PosteriorDraws::pooled() const
{
    Index rows = 0;
    for (const auto& c : chains) {
        rows += c.rows();
    }
    Eigen::MatrixXd out(rows, static_cast<Index>(names.size()));
    Index at = 0;
    for (const auto& c : chains) {
        out.middleRows(at, c.rows()) = c;
        at += c.rows();
    }
    return out;
}

double gelman_rubin(const std::vector<Eigen::VectorXd>& chains)
{
    if (chains.size() < 2) {
        throw InvalidParameterError("Rhat needs at least 2 chains");
    }
    const Index n = chains.front().size();
    for (const auto& c : chains) {
        if (c.size() != n) {
            throw InvalidParameterError("Rhat needs chains of equal length");
        }
    }
    if (n < 2) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const auto m = static_cast<double>(chains.size());
    Eigen::VectorXd means(chains.size());
    double within = 0;
    for (std::size_t k = 0; k < chains.size(); ++k) {
        means(static_cast<Index>(k)) = chains[k].mean();
        within += (chains[k].array() - means(static_cast<Index>(k))).square().sum() / static_cast<double>(n - 1);
    }
    within /= m;
    const double between_over_n = (means.array() - means.mean()).square().sum() / (m - 1);
    // Identical constant chains carry no evidence of non-convergence.
    if (within <= 0) {
        return between_over_n <= 0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
    const double pooled = (static_cast<double>(n) - 1) / static_cast<double>(n) * within + between_over_n;
    return std::sqrt(pooled / within);
}

double quantile(Eigen::VectorXd values, double p)
{
    if (values.size() == 0) {
        throw InvalidParameterError("quantile of an empty sample");
    }
    std::sort(values.data(), values.data() + values.size());
    const double h = (static_cast<double>(values.size()) - 1) * p;
    const auto lo = static_cast<Index>(std::floor(h));
    const Index hi = std::min<Index>(lo + 1, values.size() - 1);
    const double lower = values(lo);
    if (hi == lo || values(hi) == lower) {
        return lower;
    }
    return lower + (h - static_cast<double>(lo)) * (values(hi) - lower);
}

ParameterSummary summarize_series(std::string name, const std::vector<Eigen::VectorXd>& chains)
{
    ParameterSummary s;
    s.name = std::move(name);
    Index n = 0;
    for (const auto& c : chains) {
        n += c.size();
    }
    if (n == 0) {
        throw InvalidParameterError("no draws to summarize");
    }
    Eigen::VectorXd all(n);
    Index at = 0;
    for (const auto& c : chains) {
        all.segment(at, c.size()) = c;
        at += c.size();
    }
    s.mean = all.mean();
    s.sd = n > 1 ? std::sqrt((all.array() - s.mean).square().sum() / static_cast<double>(n - 1)) : 0.0;
    if ((all.array() == all(0)).all()) {
        s.mean = all(0);
        s.sd = 0;
    }
    s.q025 = quantile(all, 0.025);
    s.q975 = quantile(all, 0.975);
    s.rhat = chains.size() >= 2 ? gelman_rubin(chains) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

namespace
{

/// Applies `f` to every kept row of every chain, producing one derived series per chain.
template <typename F>
std::vector<Eigen::VectorXd> derived(const PosteriorDraws& draws, F f)
{
    std::vector<Eigen::VectorXd> out;
    for (const auto& chain : draws.chains) {
        Eigen::VectorXd series(chain.rows());
        for (Index i = 0; i < chain.rows(); ++i) {
            series(i) = f(chain.row(i));
        }
        out.push_back(std::move(series));
    }
    return out;
}

int require_column(const PosteriorDraws& draws, const std::string& name)
{
    const int j = draws.column(name);
    if (j < 0) {
        throw DataValidationError("draws have no column '" + name + "'");
    }
    return j;
}

} // namespace

PosteriorSummary summarize(const PosteriorDraws& draws)
{
    if (draws.chains.empty() || draws.chains.front().rows() == 0) {
        throw InvalidParameterError("no draws to summarize");
    }
    PosteriorSummary out;
    for (std::size_t j = 0; j < draws.names.size(); ++j) {
        std::vector<Eigen::VectorXd> series;
        for (const auto& chain : draws.chains) {
            series.push_back(chain.col(static_cast<Index>(j)));
        }
        out.parameters.push_back(summarize_series(draws.names[j], series));
    }
    for (AgeGroup age : draws.age_groups) {
        const std::string label(to_string(age));
        std::vector<int> r0_columns;
        for (const auto& key : draws.compartments) {
            if (key.age_group == age) {
                r0_columns.push_back(require_column(draws, "r0[" + to_string(key) + "]"));
            }
        }
        const int psi_column = require_column(draws, "psi[" + label + "]");
        OffspringRow row{age, {}, {}, {}, {}};
        row.r0 = summarize_series("r0[" + label + "]", derived(draws, [&](const auto& x) {
                                      double sum = 0;
                                      for (int j : r0_columns) {
                                          sum += x(j);
                                      }
                                      return r0_columns.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                                : sum / static_cast<double>(r0_columns.size());
                                  }));
        row.psi = summarize_series("psi[" + label + "]", derived(draws, [&](const auto& x) { return x(psi_column); }));
        // Offspring statistics depend only on psi; chains repeat values on rejected moves.
        std::map<double, OffspringSummary> cache;
        auto stats = [&](double psi) -> const OffspringSummary& {
            auto it = cache.find(psi);
            if (it == cache.end()) {
                it = cache.emplace(psi, offspring_summary(1.0, psi, 0.2)).first;
            }
            return it->second;
        };
        row.infecting_ratio = summarize_series("infecting_ratio[" + label + "]", derived(draws, [&](const auto& x) {
                                                   return stats(x(psi_column)).infecting_ratio;
                                               }));
        row.top_share = summarize_series("top_share[" + label + "]", derived(draws, [&](const auto& x) {
                                             return stats(x(psi_column)).top_share;
                                         }));
        out.offspring.push_back(std::move(row));
    }
    for (AgeGroup age : draws.age_groups) {
        for (const auto& cov : draws.covariates) {
            const std::string name = "beta[" + std::string(to_string(age)) + ":" + cov + "]";
            const int j = require_column(draws, name);
            out.effects.push_back(
                {age, cov,
                 summarize_series("effect[" + std::string(to_string(age)) + ":" + cov + "]",
                                  derived(draws, [&](const auto& x) { return -100.0 * x(j); }))});
        }
    }
    return out;
}

EffectSet effects_from_draw(const PosteriorDraws& draws, const Eigen::Ref<const Eigen::RowVectorXd>& row)
{
    EffectSet e = EffectSet::for_compartments(draws.compartments, draws.covariates);
    for (std::size_t c = 0; c < draws.compartments.size(); ++c) {
        e.r0(static_cast<Index>(c)) = row(require_column(draws, "r0[" + to_string(draws.compartments[c]) + "]"));
    }
    for (std::size_t a = 0; a < e.age_groups.size(); ++a) {
        for (std::size_t j = 0; j < e.covariates.size(); ++j) {
            e.beta(static_cast<Index>(a), static_cast<Index>(j)) = row(require_column(
                draws, "beta[" + std::string(to_string(e.age_groups[a])) + ":" + e.covariates[j] + "]"));
        }
    }
    return e;
}

// ---- Reduced form ---------------------------------------------------------------

double predicted_growth_variance(double r, double psi, double load, TransmissionVariant variant)
{
    if (!(load > 0) || !(r > 0) || !(psi > 0)) {
        throw InvalidParameterError("growth variance needs load, R and psi > 0");
    }
    if (variant == TransmissionVariant::PerIndividual) {
        return r * (psi + r) / (load * psi);
    }
    return r / load + r * r / psi;
}

double dispersion_from_growth_variance(double r, double variance, double load)
{
    const double excess = variance * load - r;
    if (!(excess > 0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return r * r / excess;
}

namespace
{

struct UnitData
{
    std::vector<std::pair<double, std::int64_t>> obs;
};

struct Moments
{
    double r = 0;
    double variance = 0;
    double harmonic = 0;
    double psi = 0;
    bool estimable = false;
    int n = 0;
};

Moments moments(const std::vector<const UnitData*>& units)
{
    Moments m;
    double sum = 0;
    double inverse = 0;
    for (const auto* u : units) {
        for (const auto& [rate, prior] : u->obs) {
            sum += rate;
            inverse += 1.0 / static_cast<double>(prior);
            ++m.n;
        }
    }
    if (m.n < 2) {
        m.psi = std::numeric_limits<double>::infinity();
        return m;
    }
    m.r = sum / m.n;
    double ss = 0;
    for (const auto* u : units) {
        for (const auto& o : u->obs) {
            ss += (o.first - m.r) * (o.first - m.r);
        }
    }
    m.variance = ss / (m.n - 1);
    m.harmonic = m.n / inverse;
    const double psi = dispersion_from_growth_variance(m.r, m.variance, m.harmonic);
    m.estimable = std::isfinite(psi) && m.r > 0;
    m.psi = m.estimable ? psi : std::numeric_limits<double>::infinity();
    return m;
}

} // namespace

std::vector<ReducedFormEstimate> estimate_dispersion_reduced(const std::vector<GrowthObservation>& observations,
                                                             int bootstrap_n, std::uint64_t seed, double level)
{
    if (bootstrap_n < 0 || !(level > 0 && level < 1)) {
        throw InvalidParameterError("bootstrap size must be >= 0 and level in (0, 1)");
    }
    std::map<std::string, std::map<std::string, UnitData>> groups;
    for (const auto& o : observations) {
        if (o.prior_count <= 0 || !std::isfinite(o.rate)) {
            continue;
        }
        groups[o.group][o.unit].obs.emplace_back(o.rate, o.prior_count);
    }
    std::vector<ReducedFormEstimate> out;
    std::uint64_t group_index = 0;
    for (auto& [group, by_unit] : groups) {
        // Order units by content so results do not depend on unit labels.
        std::vector<UnitData> units;
        for (auto& [name, data] : by_unit) {
            std::sort(data.obs.begin(), data.obs.end());
            units.push_back(std::move(data));
        }
        std::sort(units.begin(), units.end(), [](const UnitData& a, const UnitData& b) { return a.obs < b.obs; });
        if (units.size() < 3) {
            throw DataValidationError("group '" + group + "' has " + std::to_string(units.size()) +
                                      " units with growth rates; at least 3 are required");
        }
        std::vector<const UnitData*> all;
        for (const auto& u : units) {
            all.push_back(&u);
        }
        const Moments m = moments(all);
        ReducedFormEstimate est;
        est.group = group;
        est.psi_hat = m.psi;
        est.r_hat = m.r;
        est.variance = m.variance;
        est.mean_prior_count = m.harmonic;
        est.n_units = static_cast<int>(units.size());
        est.n_obs = m.n;
        est.estimable = m.estimable;
        est.ci_low = est.ci_high = m.psi;
        if (bootstrap_n > 0) {
            Rng rng = derive_stream(seed, group_index);
            std::uniform_int_distribution<std::size_t> pick(0, units.size() - 1);
            Eigen::VectorXd replicates(bootstrap_n);
            std::vector<const UnitData*> sample(units.size());
            for (int b = 0; b < bootstrap_n; ++b) {
                for (auto& s : sample) {
                    s = &units[pick(rng)];
                }
                replicates(b) = moments(sample).psi;
            }
            const double alpha = (1 - level) / 2;
            est.ci_low = std::min(quantile(replicates, alpha), est.psi_hat);
            est.ci_high = std::max(quantile(replicates, 1 - alpha), est.psi_hat);
        }
        out.push_back(est);
        ++group_index;
    }
    return out;
}

std::vector<GrowthObservation> growth_observations(const Panel& panel, std::string_view grouping)
{
    if (grouping != "all" && grouping != "month") {
        throw ConfigError("grouping must be 'all' or 'month'");
    }
    std::vector<std::string> locations;
    std::map<std::string, Index> index;
    for (const auto& key : panel.compartments) {
        if (index.emplace(key.location, static_cast<Index>(locations.size())).second) {
            locations.push_back(key.location);
        }
    }
    CountMatrix counts = CountMatrix::Zero(static_cast<Index>(locations.size()), panel.n_days);
    for (std::size_t c = 0; c < panel.compartments.size(); ++c) {
        counts.row(index.at(panel.compartments[c].location)) += panel.cases.row(static_cast<Index>(c));
    }
    std::vector<GrowthObservation> out;
    for (const auto& g : weekly_growth_rates(counts, 7)) {
        if (!g.defined) {
            continue;
        }
        const std::string group = grouping == "all" ? "all" : format_month(panel.start + g.week * 7);
        out.push_back({locations[static_cast<std::size_t>(g.unit)], group, g.rate, g.prior_count});
    }
    return out;
}

} // namespace superspread
