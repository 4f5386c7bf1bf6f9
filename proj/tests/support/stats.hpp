#pragma once

#include <cstdint>
#include <vector>

namespace stats
{

/// Two-sample chi-square homogeneity test on integer samples. Values are binned so that every bin
/// holds at least `min_expected` pooled observations; the last bin is open-ended.
struct ChiSquareResult
{
    double statistic = 0;
    int df = 0;
    double p_value = 1;
};

ChiSquareResult chi_square_two_sample(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b,
                                      double min_expected = 20);

/// Upper tail of the chi-square law.
double chi_square_sf(double x, int df);

double mean(const std::vector<double>& x);
/// Sample variance with n - 1 denominator.
double variance(const std::vector<double>& x);

} // namespace stats
