#pragma once

#include "superspread/common.hpp"
#include "superspread/effects.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace superspread
{

/// One line-list entry. Records without onset are asymptomatic-flagged: excluded from model case counts,
/// kept for diagnostics.
struct CaseRecord
{
    std::optional<Day> onset;
    Day report{};
    AgeGroup age_group = AgeGroup::A15_34;
    std::string location;
    bool died = false;

    bool asymptomatic() const { return !onset.has_value(); }
};

/// Header `onset_date,report_date,age_group,location,died`.
std::vector<CaseRecord> parse_cases(std::istream& in);
std::vector<CaseRecord> load_cases(const std::filesystem::path& file);
void write_cases(std::ostream& out, const std::vector<CaseRecord>& records);

struct PopulationTable
{
    std::map<CompartmentKey, double> by_compartment;

    double at(const CompartmentKey& key) const;
    /// Sum over age groups of one location.
    double location_total(std::string_view location) const;
    std::vector<std::string> locations() const;
};

/// Header `location,age_group,population`.
PopulationTable parse_population(std::istream& in);
PopulationTable load_population(const std::filesystem::path& file);
void write_population(std::ostream& out, const PopulationTable& table);

struct WeatherRecord
{
    std::string location;
    Day date{};
    double temperature = 0;
    double humidity = 0;
};

/// Header `location,date,temp_avg_c,rel_humidity_pct`.
std::vector<WeatherRecord> parse_weather(std::istream& in);
std::vector<WeatherRecord> load_weather(const std::filesystem::path& file);
void write_weather(std::ostream& out, const std::vector<WeatherRecord>& records);

/// Day-of-year means (Feb 29 folded into Feb 28) over all locations and years.
Climatology climatology_from_weather(const std::vector<WeatherRecord>& records);

struct InterventionSpan
{
    std::string location;
    std::string covariate;
    Day start{};
    /// Open-ended when empty; active on [start, end].
    std::optional<Day> end;
};

/// Header `location,covariate,start_date,end_date`.
std::vector<InterventionSpan> parse_interventions(std::istream& in);
std::vector<InterventionSpan> load_interventions(const std::filesystem::path& file);
void write_interventions(std::ostream& out, const std::vector<InterventionSpan>& spans);

struct HolidayRecord
{
    std::string location;
    Day date{};
    bool holiday = false;
};

/// Header `location,date,holiday`.
std::vector<HolidayRecord> parse_calendar(std::istream& in);
std::vector<HolidayRecord> load_calendar(const std::filesystem::path& file);

/// Estimation sample: symptomatic case counts by onset date per compartment plus covariates.
struct Panel
{
    std::vector<CompartmentKey> compartments;
    Day start{};
    int n_days = 0;
    /// (compartments x days)
    CountMatrix cases;
    /// Per compartment.
    Eigen::VectorXd populations;
    CovariatePanel covariates;

    void validate() const;
};

/// Estimation sample as `location,age_group,population,date,cases`, one row per compartment and day.
void write_panel(std::ostream& out, const Panel& panel);
/// Reads a panel file; the covariates must cover its window. Every compartment needs every day.
Panel parse_panel(std::istream& in, CovariatePanel covariates);
Panel load_panel(const std::filesystem::path& file, CovariatePanel covariates);

/// Values as `location,date,<covariate...>`; metadata as `covariate,kind,mean,sd` (mean/sd empty unless
/// standardized). "NA" marks a missing value.
void write_covariates(std::ostream& values, std::ostream& meta, const CovariatePanel& covariates);
/// Without metadata every covariate is read as real-valued.
CovariatePanel parse_covariates(std::istream& values, std::istream* meta);
CovariatePanel load_covariates(const std::filesystem::path& values, const std::filesystem::path* meta);

/// Symptomatic counts by onset date; records outside the compartments or window are ignored.
CountMatrix onset_counts(const std::vector<CaseRecord>& records, const std::vector<CompartmentKey>& compartments,
                         Day start, int n_days);
/// All records (symptomatic or not) by report date, per location.
CountMatrix report_counts(const std::vector<CaseRecord>& records, const std::vector<std::string>& locations,
                          Day start, int n_days);

/// log10(1 + weekly reported cases / population * 1e5), using report-date counts of days day-7..day-1
/// (cases influence behaviour the following day). `counts` is (locations x days).
Eigen::VectorXd incidence_information(const CountMatrix& counts, const Eigen::VectorXd& populations, int day);

/// 100 * (cumulative cases through day - lag) / population, per location.
Eigen::VectorXd cumulative_incidence(const CountMatrix& counts, const Eigen::VectorXd& populations, int day,
                                     int lag = 14);

struct TracedRatio
{
    double value = 0;
    int infectious = 0;
    int reported = 0;
    /// No infectious cases on the day.
    bool sparse = false;
};

/// Among onset-dated cases infectious on `day` (onset - 1 <= day <= onset + 6), the fraction already reported.
TracedRatio traced_ratio(const std::vector<CaseRecord>& records, std::string_view location, Day day);

struct GrowthRate
{
    Index unit = 0;
    /// Index of the later week (>= 1).
    int week = 0;
    double rate = 0;
    std::int64_t prior_count = 0;
    /// False when the prior week has no cases.
    bool defined = false;
};

/// Week-over-week ratios of window-aligned weekly sums. `counts` is (units x days).
std::vector<GrowthRate> weekly_growth_rates(const CountMatrix& counts, int window = 7);

struct CfrEntry
{
    AgeGroup age_group;
    std::string month;
    std::int64_t deaths = 0;
    std::int64_t cases = 0;
    double cfr = 0;
};

struct AsymptomaticEntry
{
    AgeGroup age_group;
    std::string month;
    std::int64_t asymptomatic = 0;
    std::int64_t total = 0;
    double ratio = 0;
};

struct Diagnostics
{
    /// By (age, onset month) over onset-dated cases.
    std::vector<CfrEntry> cfr;
    /// By (age, report month) over all cases.
    std::vector<AsymptomaticEntry> asymptomatic;
    /// Deaths recorded for (age, month) cells that had no onset-dated cases; those cells are omitted.
    std::int64_t omitted_cfr_cells = 0;
};

Diagnostics diagnostics(const std::vector<CaseRecord>& records);

struct FeatureSpec
{
    Day start{};
    int n_days = 0;
    std::vector<AgeGroup> age_groups = main_age_groups();
    bool traced_ratio = true;
    bool incidence = true;
    bool cumulative_incidence = true;
    bool weekday = true;
    int cumulative_lag = 14;
    /// Real-valued covariates standardized over the estimation sample.
    std::vector<std::string> standardize = {"incidence_log", "temperature", "humidity"};
};

/// Covariate names produced by build_panel for the case-derived and weather inputs.
namespace covariate_names
{
inline constexpr std::string_view traced = "traced_ratio";
inline constexpr std::string_view incidence = "incidence_log";
inline constexpr std::string_view cumulative = "cumulative_incidence";
inline constexpr std::string_view temperature = "temperature";
inline constexpr std::string_view humidity = "humidity";
inline constexpr std::string_view holiday = "holiday";
} // namespace covariate_names

/// Constructs the estimation Panel: counts for every (location in `population`, age in spec) compartment and
/// the covariate panel. Weather must cover every (location, day) of the window when given.
Panel build_panel(const FeatureSpec& spec, const std::vector<CaseRecord>& records, const PopulationTable& population,
                  const std::vector<WeatherRecord>* weather, const std::vector<InterventionSpan>& interventions,
                  const std::vector<HolidayRecord>* calendar);

} // namespace superspread
