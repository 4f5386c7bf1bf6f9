#include "superspread/features.hpp"

#include "superspread/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

namespace superspread
{

namespace
{

template <typename Parser>
auto load_with(const std::filesystem::path& file, Parser parser)
{
    std::ifstream in(file);
    if (!in) {
        throw MissingInputError("cannot open '" + file.string() + "'");
    }
    return parser(in);
}

bool parse_flag(std::string_view text, std::size_t line)
{
    if (text == "1" || text == "true" || text == "TRUE") {
        return true;
    }
    if (text == "0" || text == "false" || text == "FALSE") {
        return false;
    }
    throw DataValidationError("invalid boolean '" + std::string(text) + "'", line);
}

template <typename F>
auto at_line(std::size_t line, F f)
{
    try {
        return f();
    }
    catch (const DataValidationError& e) {
        if (e.line != 0) {
            throw;
        }
        throw DataValidationError(e.what(), line);
    }
}

} // namespace

// ---- Line list ----------------------------------------------------------------

std::vector<CaseRecord> parse_cases(std::istream& in)
{
    const CsvTable table = parse_csv(in, "cases");
    require_header(table, {"onset_date", "report_date", "age_group", "location", "died"}, "cases");
    std::vector<CaseRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        at_line(line, [&] {
            CaseRecord rec;
            if (!row[0].empty()) {
                rec.onset = parse_date(row[0]);
            }
            rec.report = parse_date(row[1]);
            rec.age_group = parse_age_group(row[2]);
            if (row[3].empty()) {
                throw DataValidationError("empty location", line);
            }
            rec.location = row[3];
            rec.died = parse_flag(row[4], line);
            if (rec.onset && *rec.onset > rec.report) {
                throw DataValidationError("onset date after report date", line);
            }
            out.push_back(std::move(rec));
            return 0;
        });
    }
    return out;
}

std::vector<CaseRecord> load_cases(const std::filesystem::path& file)
{
    return load_with(file, [](std::istream& in) { return parse_cases(in); });
}

void write_cases(std::ostream& out, const std::vector<CaseRecord>& records)
{
    out << "onset_date,report_date,age_group,location,died\n";
    for (const auto& r : records) {
        out << (r.onset ? format_date(*r.onset) : "") << ',' << format_date(r.report) << ',' << to_string(r.age_group)
            << ',' << r.location << ',' << (r.died ? 1 : 0) << '\n';
    }
}

// ---- Population ---------------------------------------------------------------

double PopulationTable::at(const CompartmentKey& key) const
{
    auto it = by_compartment.find(key);
    if (it == by_compartment.end()) {
        throw DataValidationError("missing population for " + to_string(key));
    }
    return it->second;
}

double PopulationTable::location_total(std::string_view location) const
{
    double total = 0;
    bool any = false;
    for (const auto& [key, pop] : by_compartment) {
        if (key.location == location) {
            total += pop;
            any = true;
        }
    }
    if (!any) {
        throw DataValidationError("missing population for location '" + std::string(location) + "'");
    }
    return total;
}

std::vector<std::string> PopulationTable::locations() const
{
    std::vector<std::string> out;
    for (const auto& [key, pop] : by_compartment) {
        if (out.empty() || out.back() != key.location) {
            out.push_back(key.location);
        }
    }
    return out;
}

PopulationTable parse_population(std::istream& in)
{
    const CsvTable table = parse_csv(in, "population");
    require_header(table, {"location", "age_group", "population"}, "population");
    PopulationTable out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        at_line(line, [&] {
            CompartmentKey key{row[0], parse_age_group(row[1])};
            const double pop = parse_double(row[2], line);
            if (!(pop > 0)) {
                throw DataValidationError("population must be > 0", line);
            }
            if (!out.by_compartment.emplace(key, pop).second) {
                throw DataValidationError("duplicate population row for " + to_string(key), line);
            }
            return 0;
        });
    }
    return out;
}

PopulationTable load_population(const std::filesystem::path& file)
{
    return load_with(file, [](std::istream& in) { return parse_population(in); });
}

void write_population(std::ostream& out, const PopulationTable& table)
{
    out << "location,age_group,population\n";
    for (const auto& [key, pop] : table.by_compartment) {
        out << key.location << ',' << to_string(key.age_group) << ',' << format_number(pop) << '\n';
    }
}

// ---- Weather / interventions / calendar ---------------------------------------

std::vector<WeatherRecord> parse_weather(std::istream& in)
{
    const CsvTable table = parse_csv(in, "weather");
    require_header(table, {"location", "date", "temp_avg_c", "rel_humidity_pct"}, "weather");
    std::vector<WeatherRecord> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        at_line(line, [&] {
            out.push_back({row[0], parse_date(row[1]), parse_double(row[2], line), parse_double(row[3], line)});
            return 0;
        });
    }
    return out;
}

std::vector<WeatherRecord> load_weather(const std::filesystem::path& file)
{
    return load_with(file, [](std::istream& in) { return parse_weather(in); });
}

void write_weather(std::ostream& out, const std::vector<WeatherRecord>& records)
{
    out << "location,date,temp_avg_c,rel_humidity_pct\n";
    for (const auto& w : records) {
        out << w.location << ',' << format_date(w.date) << ',' << format_number(w.temperature) << ','
            << format_number(w.humidity) << '\n';
    }
}

Climatology climatology_from_weather(const std::vector<WeatherRecord>& records)
{
    using namespace std::chrono;
    Eigen::VectorXd temp = Eigen::VectorXd::Zero(365);
    Eigen::VectorXd hum = Eigen::VectorXd::Zero(365);
    Eigen::VectorXd n = Eigen::VectorXd::Zero(365);
    for (const auto& w : records) {
        const year_month_day ymd{w.date};
        int doy = days_between(sys_days{ymd.year() / January / 1}, w.date);
        if (ymd.year().is_leap() && doy >= 59) {
            doy = doy == 59 ? 58 : doy - 1;
        }
        temp(doy) += w.temperature;
        hum(doy) += w.humidity;
        n(doy) += 1;
    }
    Climatology out;
    out.temperature = Eigen::VectorXd::Constant(365, std::numeric_limits<double>::quiet_NaN());
    out.humidity = out.temperature;
    for (Index d = 0; d < 365; ++d) {
        if (n(d) > 0) {
            out.temperature(d) = temp(d) / n(d);
            out.humidity(d) = hum(d) / n(d);
        }
    }
    return out;
}

std::vector<InterventionSpan> parse_interventions(std::istream& in)
{
    const CsvTable table = parse_csv(in, "interventions");
    require_header(table, {"location", "covariate", "start_date", "end_date"}, "interventions");
    std::vector<InterventionSpan> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        at_line(line, [&] {
            InterventionSpan span{row[0], row[1], parse_date(row[2]), std::nullopt};
            if (span.covariate.empty()) {
                throw DataValidationError("empty intervention name", line);
            }
            if (!row[3].empty()) {
                span.end = parse_date(row[3]);
                if (*span.end < span.start) {
                    throw DataValidationError("intervention ends before it starts", line);
                }
            }
            out.push_back(std::move(span));
            return 0;
        });
    }
    return out;
}

std::vector<InterventionSpan> load_interventions(const std::filesystem::path& file)
{
    return load_with(file, [](std::istream& in) { return parse_interventions(in); });
}

void write_interventions(std::ostream& out, const std::vector<InterventionSpan>& spans)
{
    out << "location,covariate,start_date,end_date\n";
    for (const auto& s : spans) {
        out << s.location << ',' << s.covariate << ',' << format_date(s.start) << ','
            << (s.end ? format_date(*s.end) : "") << '\n';
    }
}

std::vector<HolidayRecord> parse_calendar(std::istream& in)
{
    const CsvTable table = parse_csv(in, "calendar");
    require_header(table, {"location", "date", "holiday"}, "calendar");
    std::vector<HolidayRecord> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        at_line(line, [&] {
            out.push_back({row[0], parse_date(row[1]), parse_flag(row[2], line)});
            return 0;
        });
    }
    return out;
}

std::vector<HolidayRecord> load_calendar(const std::filesystem::path& file)
{
    return load_with(file, [](std::istream& in) { return parse_calendar(in); });
}

// ---- Panel ----------------------------------------------------------------------

void Panel::validate() const
{
    const auto n = static_cast<Index>(compartments.size());
    if (cases.rows() != n || cases.cols() != n_days) {
        throw DataValidationError("case matrix shape does not match compartments x days");
    }
    if ((cases.array() < 0).any()) {
        throw DataValidationError("negative case count");
    }
    if (populations.size() != n || (populations.array() <= 0).any()) {
        throw DataValidationError("populations must be > 0 for every compartment");
    }
    if (covariates.n_days < n_days || covariates.start != start) {
        throw DataValidationError("covariates do not cover the panel window");
    }
    covariates.validate();
    for (const auto& key : compartments) {
        if (covariates.size() > 0 && covariates.location_index(key.location) < 0) {
            throw DataValidationError("no covariates for location '" + key.location + "'");
        }
    }
}

CountMatrix onset_counts(const std::vector<CaseRecord>& records, const std::vector<CompartmentKey>& compartments,
                         Day start, int n_days)
{
    CountMatrix out = CountMatrix::Zero(static_cast<Index>(compartments.size()), n_days);
    std::map<CompartmentKey, Index> index;
    for (std::size_t c = 0; c < compartments.size(); ++c) {
        index.emplace(compartments[c], static_cast<Index>(c));
    }
    for (const auto& r : records) {
        if (!r.onset) {
            continue;
        }
        const int d = days_between(start, *r.onset);
        if (d < 0 || d >= n_days) {
            continue;
        }
        auto it = index.find(CompartmentKey{r.location, r.age_group});
        if (it != index.end()) {
            out(it->second, d) += 1;
        }
    }
    return out;
}

CountMatrix report_counts(const std::vector<CaseRecord>& records, const std::vector<std::string>& locations,
                          Day start, int n_days)
{
    CountMatrix out = CountMatrix::Zero(static_cast<Index>(locations.size()), n_days);
    std::map<std::string, Index, std::less<>> index;
    for (std::size_t l = 0; l < locations.size(); ++l) {
        index.emplace(locations[l], static_cast<Index>(l));
    }
    for (const auto& r : records) {
        const int d = days_between(start, r.report);
        if (d < 0 || d >= n_days) {
            continue;
        }
        auto it = index.find(r.location);
        if (it != index.end()) {
            out(it->second, d) += 1;
        }
    }
    return out;
}

Eigen::VectorXd incidence_information(const CountMatrix& counts, const Eigen::VectorXd& populations, int day)
{
    if (populations.size() != counts.rows() || (populations.array() <= 0).any()) {
        throw DataValidationError("incidence needs a positive population for every location");
    }
    Eigen::VectorXd out(counts.rows());
    const int from = std::max(0, day - 7);
    const int to = std::min<int>(day, static_cast<int>(counts.cols()));
    for (Index l = 0; l < counts.rows(); ++l) {
        double weekly = 0;
        for (int d = from; d < to; ++d) {
            weekly += static_cast<double>(counts(l, d));
        }
        out(l) = std::log10(1.0 + weekly / populations(l) * 1e5);
    }
    return out;
}

Eigen::VectorXd cumulative_incidence(const CountMatrix& counts, const Eigen::VectorXd& populations, int day,
                                     int lag)
{
    if (populations.size() != counts.rows() || (populations.array() <= 0).any()) {
        throw DataValidationError("cumulative incidence needs a positive population for every location");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(counts.rows());
    const int through = std::min<int>(day - lag, static_cast<int>(counts.cols()) - 1);
    if (through < 0) {
        return out;
    }
    for (Index l = 0; l < counts.rows(); ++l) {
        out(l) = 100.0 * static_cast<double>(counts.row(l).head(through + 1).sum()) / populations(l);
    }
    return out;
}

TracedRatio traced_ratio(const std::vector<CaseRecord>& records, std::string_view location, Day day)
{
    TracedRatio out;
    for (const auto& r : records) {
        if (!r.onset || r.location != location) {
            continue;
        }
        const int since_onset = days_between(*r.onset, day);
        if (since_onset < -1 || since_onset > 6) {
            continue;
        }
        ++out.infectious;
        if (r.report <= day) {
            ++out.reported;
        }
    }
    out.sparse = out.infectious == 0;
    out.value = out.sparse ? 0.0 : static_cast<double>(out.reported) / out.infectious;
    return out;
}

std::vector<GrowthRate> weekly_growth_rates(const CountMatrix& counts, int window)
{
    if (window <= 0) {
        throw InvalidParameterError("growth-rate window must be positive");
    }
    const int weeks = static_cast<int>(counts.cols()) / window;
    std::vector<GrowthRate> out;
    for (Index u = 0; u < counts.rows(); ++u) {
        std::int64_t previous = counts.row(u).segment(0, window).sum();
        for (int w = 1; w < weeks; ++w) {
            const std::int64_t current = counts.row(u).segment(static_cast<Index>(w) * window, window).sum();
            GrowthRate g;
            g.unit = u;
            g.week = w;
            g.prior_count = previous;
            g.defined = previous > 0;
            g.rate = g.defined ? static_cast<double>(current) / static_cast<double>(previous)
                               : std::numeric_limits<double>::quiet_NaN();
            out.push_back(g);
            previous = current;
        }
    }
    return out;
}

Diagnostics diagnostics(const std::vector<CaseRecord>& records)
{
    std::map<std::pair<AgeGroup, std::string>, std::pair<std::int64_t, std::int64_t>> cfr;  // deaths, cases
    std::map<std::pair<AgeGroup, std::string>, std::pair<std::int64_t, std::int64_t>> asym; // flagged, total
    std::int64_t orphan_deaths = 0;
    for (const auto& r : records) {
        auto& a = asym[{r.age_group, format_month(r.report)}];
        a.second += 1;
        if (r.asymptomatic()) {
            a.first += 1;
            if (r.died) {
                ++orphan_deaths;
            }
            continue;
        }
        auto& c = cfr[{r.age_group, format_month(*r.onset)}];
        c.second += 1;
        c.first += r.died ? 1 : 0;
    }
    Diagnostics out;
    for (const auto& [key, v] : cfr) {
        out.cfr.push_back({key.first, key.second, v.first, v.second, static_cast<double>(v.first) / v.second});
    }
    for (const auto& [key, v] : asym) {
        out.asymptomatic.push_back(
            {key.first, key.second, v.first, v.second, static_cast<double>(v.first) / v.second});
    }
    out.omitted_cfr_cells = orphan_deaths;
    return out;
}

Panel build_panel(const FeatureSpec& spec, const std::vector<CaseRecord>& records, const PopulationTable& population,
                  const std::vector<WeatherRecord>* weather, const std::vector<InterventionSpan>& interventions,
                  const std::vector<HolidayRecord>* calendar)
{
    if (spec.n_days <= 0) {
        throw InvalidParameterError("feature window must contain at least one day");
    }
    Panel panel;
    panel.start = spec.start;
    panel.n_days = spec.n_days;
    const std::vector<std::string> locations = population.locations();
    for (const auto& loc : locations) {
        for (AgeGroup age : spec.age_groups) {
            panel.compartments.push_back({loc, age});
        }
    }
    panel.populations.resize(static_cast<Index>(panel.compartments.size()));
    for (std::size_t c = 0; c < panel.compartments.size(); ++c) {
        panel.populations(static_cast<Index>(c)) = population.at(panel.compartments[c]);
    }
    panel.cases = onset_counts(records, panel.compartments, spec.start, spec.n_days);

    Eigen::VectorXd location_pop(static_cast<Index>(locations.size()));
    for (std::size_t l = 0; l < locations.size(); ++l) {
        location_pop(static_cast<Index>(l)) = population.location_total(locations[l]);
    }

    // Report-date history reaching back to the earliest report so lagged covariates see all prior cases.
    Day series_start = spec.start;
    for (const auto& r : records) {
        series_start = std::min(series_start, r.report);
    }
    const int offset = days_between(series_start, spec.start);
    const CountMatrix reports = report_counts(records, locations, series_start, offset + spec.n_days);

    std::set<std::string> intervention_names;
    for (const auto& s : interventions) {
        intervention_names.insert(s.covariate);
    }

    CovariatePanel& cov = panel.covariates;
    cov.start = spec.start;
    cov.n_days = spec.n_days;
    cov.locations = locations;
    auto add = [&](std::string name, CovariateKind kind) {
        cov.names.push_back(std::move(name));
        cov.kinds.push_back(kind);
        cov.stats.emplace_back();
    };
    for (const auto& name : intervention_names) {
        add(name, CovariateKind::Dummy);
    }
    if (calendar) {
        add(std::string(covariate_names::holiday), CovariateKind::Dummy);
    }
    if (spec.weekday) {
        for (int wd = 2; wd <= 7; ++wd) {
            add("weekday_" + std::to_string(wd), CovariateKind::Dummy);
        }
    }
    if (spec.traced_ratio) {
        add(std::string(covariate_names::traced), CovariateKind::Real);
    }
    if (spec.incidence) {
        add(std::string(covariate_names::incidence), CovariateKind::Real);
    }
    if (spec.cumulative_incidence) {
        add(std::string(covariate_names::cumulative), CovariateKind::Real);
    }
    if (weather) {
        add(std::string(covariate_names::temperature), CovariateKind::Real);
        add(std::string(covariate_names::humidity), CovariateKind::Real);
    }

    const auto J = cov.size();
    cov.values.assign(locations.size(), Eigen::MatrixXd::Zero(spec.n_days, J));

    std::map<std::string, std::vector<CaseRecord>, std::less<>> by_location;
    for (const auto& r : records) {
        by_location[r.location].push_back(r);
    }
    std::map<std::pair<std::string, int>, std::pair<double, double>> weather_at;
    if (weather) {
        for (const auto& w : *weather) {
            weather_at[{w.location, days_between(spec.start, w.date)}] = {w.temperature, w.humidity};
        }
    }
    std::set<std::pair<std::string, int>> holidays;
    if (calendar) {
        for (const auto& h : *calendar) {
            if (h.holiday) {
                holidays.insert({h.location, days_between(spec.start, h.date)});
            }
        }
    }
    static const std::vector<CaseRecord> no_records;

    for (std::size_t l = 0; l < locations.size(); ++l) {
        const std::string& loc = locations[l];
        Eigen::MatrixXd& m = cov.values[l];
        auto found = by_location.find(loc);
        const auto& loc_records = found == by_location.end() ? no_records : found->second;
        Index j = 0;
        for (const auto& name : intervention_names) {
            for (const auto& s : interventions) {
                if (s.covariate != name || s.location != loc) {
                    continue;
                }
                for (int d = 0; d < spec.n_days; ++d) {
                    const Day day = spec.start + d;
                    if (day >= s.start && (!s.end || day <= *s.end)) {
                        m(d, j) = 1.0;
                    }
                }
            }
            ++j;
        }
        if (calendar) {
            for (int d = 0; d < spec.n_days; ++d) {
                m(d, j) = holidays.count({loc, d}) ? 1.0 : 0.0;
            }
            ++j;
        }
        if (spec.weekday) {
            for (int d = 0; d < spec.n_days; ++d) {
                const unsigned wd = iso_weekday(spec.start + d);
                if (wd >= 2) {
                    m(d, j + wd - 2) = 1.0;
                }
            }
            j += 6;
        }
        if (spec.traced_ratio) {
            for (int d = 0; d < spec.n_days; ++d) {
                m(d, j) = traced_ratio(loc_records, loc, spec.start + d).value;
            }
            ++j;
        }
        if (spec.incidence) {
            for (int d = 0; d < spec.n_days; ++d) {
                m(d, j) = incidence_information(reports, location_pop, offset + d)(static_cast<Index>(l));
            }
            ++j;
        }
        if (spec.cumulative_incidence) {
            for (int d = 0; d < spec.n_days; ++d) {
                m(d, j) =
                    cumulative_incidence(reports, location_pop, offset + d, spec.cumulative_lag)(static_cast<Index>(l));
            }
            ++j;
        }
        if (weather) {
            for (int d = 0; d < spec.n_days; ++d) {
                auto it = weather_at.find({loc, d});
                if (it == weather_at.end()) {
                    throw DataValidationError("missing weather for location '" + loc + "' on " +
                                              format_date(spec.start + d) + " (covariate temperature/humidity)");
                }
                m(d, j) = it->second.first;
                m(d, j + 1) = it->second.second;
            }
            j += 2;
        }
    }

    for (const auto& name : spec.standardize) {
        if (cov.covariate_index(name) >= 0) {
            cov = standardize(cov, name);
        }
    }
    panel.validate();
    return panel;
}

} // namespace superspread
