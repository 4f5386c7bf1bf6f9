#include "stats.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <map>

namespace stats
{

double chi_square_sf(double x, int df)
{
    if (df <= 0) {
        return 1.0;
    }
    return Eigen::numext::igammac(0.5 * df, 0.5 * x);
}

ChiSquareResult chi_square_two_sample(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b,
                                      double min_expected)
{
    std::map<std::int64_t, std::pair<double, double>> counts;
    for (auto v : a) {
        counts[v].first += 1;
    }
    for (auto v : b) {
        counts[v].second += 1;
    }
    // Merge adjacent values left to right until each bin is large enough; fold a small tail into the last bin.
    std::vector<std::pair<double, double>> bins;
    std::pair<double, double> open{0, 0};
    for (const auto& [value, c] : counts) {
        open.first += c.first;
        open.second += c.second;
        if (open.first + open.second >= min_expected) {
            bins.push_back(open);
            open = {0, 0};
        }
    }
    if (open.first + open.second > 0) {
        if (bins.empty()) {
            bins.push_back(open);
        }
        else {
            bins.back().first += open.first;
            bins.back().second += open.second;
        }
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    ChiSquareResult out;
    for (const auto& [ca, cb] : bins) {
        const double total = ca + cb;
        const double ea = total * na / (na + nb);
        const double eb = total * nb / (na + nb);
        out.statistic += (ca - ea) * (ca - ea) / ea + (cb - eb) * (cb - eb) / eb;
    }
    out.df = static_cast<int>(bins.size()) - 1;
    out.p_value = chi_square_sf(out.statistic, out.df);
    return out;
}

double mean(const std::vector<double>& x)
{
    double s = 0;
    for (double v : x) {
        s += v;
    }
    return s / static_cast<double>(x.size());
}

double variance(const std::vector<double>& x)
{
    const double m = mean(x);
    double s = 0;
    for (double v : x) {
        s += (v - m) * (v - m);
    }
    return s / static_cast<double>(x.size() - 1);
}

} // namespace stats
