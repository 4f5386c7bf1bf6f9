#pragma once

#include <Eigen/Core>

#include <chrono>
#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace superspread
{

// ---- Errors -----------------------------------------------------------------

enum class ErrorKind
{
    InvalidParameter,
    Truncation,
    DataValidation,
    MissingInput,
    Config,
    Numerical,
};

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what)
        , m_kind(kind)
    {
    }

    ErrorKind kind() const noexcept { return m_kind; }

private:
    ErrorKind m_kind;
};

/// Negative or otherwise invalid distribution / model parameter.
struct InvalidParameterError : Error
{
    explicit InvalidParameterError(const std::string& what) : Error(ErrorKind::InvalidParameter, what) {}
};

struct TruncationError : Error
{
    explicit TruncationError(const std::string& what) : Error(ErrorKind::Truncation, what) {}
};

/// Malformed or inconsistent input data. `line` is 1-based, 0 when not tied to a file line.
struct DataValidationError : Error
{
    DataValidationError(const std::string& what, std::size_t line = 0)
        : Error(ErrorKind::DataValidation, line ? what + " (line " + std::to_string(line) + ")" : what)
        , line(line)
    {
    }
    std::size_t line;
};

struct MissingInputError : Error
{
    explicit MissingInputError(const std::string& what) : Error(ErrorKind::MissingInput, what) {}
};

struct ConfigError : Error
{
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct NumericalError : Error
{
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// A multiplicative factor (1 + beta * x) or (1 + noise) left the positive half line.
struct NonPositiveRateError : Error
{
    NonPositiveRateError(const std::string& covariate, double factor)
        : Error(ErrorKind::InvalidParameter,
                "non-positive reproductive-number factor " + std::to_string(factor) + " from covariate '" +
                    covariate + "'")
        , covariate(covariate)
    {
    }
    std::string covariate;
};

// ---- Eigen aliases ----------------------------------------------------------

using Index = Eigen::Index;
using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---- Random streams ---------------------------------------------------------

using Rng = std::mt19937_64;

/// Independent stream for a parallel unit: seeded from master XOR unit index, passed
/// through splitmix64 so adjacent indices do not yield correlated Mersenne states.
Rng derive_stream(std::uint64_t master_seed, std::uint64_t unit_index);

// ---- Dates ------------------------------------------------------------------

using Day = std::chrono::sys_days;

/// Parses YYYY-MM-DD. Throws DataValidationError on anything else.
Day parse_date(std::string_view text);
std::string format_date(Day day);
/// "YYYY-MM"
std::string format_month(Day day);
/// 1 = Monday ... 7 = Sunday
unsigned iso_weekday(Day day);

inline Day operator+(Day day, int offset) { return day + std::chrono::days{offset}; }
inline int days_between(Day from, Day to) { return static_cast<int>((to - from).count()); }

// ---- Compartments -----------------------------------------------------------

enum class AgeGroup : int
{
    A00_04 = 0,
    A05_14,
    A15_34,
    A35_59,
    A60_79,
    A80_plus,
};

inline constexpr int age_group_count = 6;

std::string_view to_string(AgeGroup age);
/// Accepts the bracket labels "0-4", "5-14", "15-34", "35-59", "60-79", "80+".
AgeGroup parse_age_group(std::string_view text);
/// The four brackets of the main analysis: 15-34, 35-59, 60-79, 80+.
std::vector<AgeGroup> main_age_groups();

struct CompartmentKey
{
    std::string location;
    AgeGroup age_group = AgeGroup::A15_34;

    auto operator<=>(const CompartmentKey&) const = default;
    bool operator==(const CompartmentKey&) const = default;
};

std::string to_string(const CompartmentKey& key);

} // namespace superspread
