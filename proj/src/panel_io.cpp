#include "superspread/features.hpp"
#include "superspread/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>

namespace superspread
{

namespace
{

double parse_value(const std::string& text, std::size_t line)
{
    if (text == "NA") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return parse_double(text, line);
}

} // namespace

void write_panel(std::ostream& out, const Panel& panel)
{
    out << "location,age_group,population,date,cases\n";
    for (std::size_t c = 0; c < panel.compartments.size(); ++c) {
        const auto& key = panel.compartments[c];
        const std::string prefix = key.location + "," + std::string(to_string(key.age_group)) + "," +
                                   format_number(panel.populations(static_cast<Index>(c))) + ",";
        for (int t = 0; t < panel.n_days; ++t) {
            out << prefix << format_date(panel.start + t) << ',' << panel.cases(static_cast<Index>(c), t) << '\n';
        }
    }
}

Panel parse_panel(std::istream& in, CovariatePanel covariates)
{
    const CsvTable table = parse_csv(in, "panel");
    require_header(table, {"location", "age_group", "population", "date", "cases"}, "panel");
    Panel panel;
    std::map<CompartmentKey, std::size_t> index;
    std::vector<std::map<Day, std::int64_t>> counts;
    std::vector<double> pops;
    Day first = Day::max();
    Day last = Day::min();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        CompartmentKey key{row[0], AgeGroup::A15_34};
        try {
            key.age_group = parse_age_group(row[1]);
        }
        catch (const DataValidationError& e) {
            throw DataValidationError(e.what(), line);
        }
        const double pop = parse_double(row[2], line);
        Day day;
        try {
            day = parse_date(row[3]);
        }
        catch (const DataValidationError& e) {
            throw DataValidationError(e.what(), line);
        }
        const std::int64_t cases = parse_int64(row[4], line);
        if (cases < 0) {
            throw DataValidationError("negative case count", line);
        }
        auto [it, inserted] = index.emplace(key, panel.compartments.size());
        if (inserted) {
            panel.compartments.push_back(key);
            counts.emplace_back();
            pops.push_back(pop);
        }
        if (pops[it->second] != pop) {
            throw DataValidationError("population changes within compartment " + to_string(key), line);
        }
        if (!counts[it->second].emplace(day, cases).second) {
            throw DataValidationError("duplicate row for " + to_string(key) + " on " + format_date(day), line);
        }
        first = std::min(first, day);
        last = std::max(last, day);
    }
    panel.start = panel.compartments.empty() ? covariates.start : first;
    panel.n_days = panel.compartments.empty() ? 0 : days_between(first, last) + 1;
    panel.cases = CountMatrix::Zero(static_cast<Index>(panel.compartments.size()), panel.n_days);
    panel.populations = Eigen::Map<const Eigen::VectorXd>(pops.data(), static_cast<Index>(pops.size()));
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (static_cast<int>(counts[c].size()) != panel.n_days) {
            throw DataValidationError("compartment " + to_string(panel.compartments[c]) +
                                      " does not cover every day of the window");
        }
        for (const auto& [day, n] : counts[c]) {
            panel.cases(static_cast<Index>(c), days_between(first, day)) = n;
        }
    }
    if (covariates.size() > 0 && covariates.start != panel.start) {
        throw DataValidationError("covariates start " + format_date(covariates.start) + " but the panel starts " +
                                  format_date(panel.start));
    }
    panel.covariates = std::move(covariates);
    panel.covariates.start = panel.start;
    if (panel.covariates.size() == 0) {
        panel.covariates.n_days = panel.n_days;
    }
    panel.validate();
    return panel;
}

Panel load_panel(const std::filesystem::path& file, CovariatePanel covariates)
{
    std::ifstream in(file);
    if (!in) {
        throw MissingInputError("cannot open '" + file.string() + "'");
    }
    return parse_panel(in, std::move(covariates));
}

void write_covariates(std::ostream& values, std::ostream& meta, const CovariatePanel& covariates)
{
    values << "location,date";
    for (const auto& name : covariates.names) {
        values << ',' << name;
    }
    values << '\n';
    for (std::size_t l = 0; l < covariates.locations.size(); ++l) {
        for (int t = 0; t < covariates.n_days; ++t) {
            values << covariates.locations[l] << ',' << format_date(covariates.start + t);
            for (Index j = 0; j < covariates.size(); ++j) {
                values << ',' << format_number(covariates.values[l](t, j));
            }
            values << '\n';
        }
    }
    meta << "covariate,kind,mean,sd\n";
    for (std::size_t j = 0; j < covariates.names.size(); ++j) {
        meta << covariates.names[j] << ',' << to_string(covariates.kinds[j]) << ',';
        if (j < covariates.stats.size() && covariates.stats[j]) {
            meta << format_number(covariates.stats[j]->mean) << ',' << format_number(covariates.stats[j]->sd);
        }
        else {
            meta << ',';
        }
        meta << '\n';
    }
}

CovariatePanel parse_covariates(std::istream& values, std::istream* meta)
{
    const CsvTable table = parse_csv(values, "covariates");
    require_header(table, {"location", "date"}, "covariates");
    CovariatePanel panel;
    panel.names.assign(table.header.begin() + 2, table.header.end());
    panel.kinds.assign(panel.names.size(), CovariateKind::Real);
    panel.stats.assign(panel.names.size(), std::nullopt);
    if (meta) {
        const CsvTable m = parse_csv(*meta, "covariate metadata");
        require_header(m, {"covariate", "kind", "mean", "sd"}, "covariate metadata");
        for (std::size_t r = 0; r < m.rows.size(); ++r) {
            const auto& row = m.rows[r];
            const int j = panel.covariate_index(row[0]);
            if (j < 0) {
                throw DataValidationError("metadata for unknown covariate '" + row[0] + "'", m.lines[r]);
            }
            try {
                panel.kinds[static_cast<std::size_t>(j)] = parse_covariate_kind(row[1]);
            }
            catch (const Error& e) {
                throw DataValidationError(e.what(), m.lines[r]);
            }
            if (!row[2].empty() || !row[3].empty()) {
                panel.stats[static_cast<std::size_t>(j)] =
                    Standardization{parse_double(row[2], m.lines[r]), parse_double(row[3], m.lines[r])};
            }
        }
    }
    std::map<std::string, std::map<Day, std::vector<double>>> rows;
    Day first = Day::max();
    Day last = Day::min();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        Day day;
        try {
            day = parse_date(row[1]);
        }
        catch (const DataValidationError& e) {
            throw DataValidationError(e.what(), line);
        }
        std::vector<double> v;
        for (std::size_t j = 2; j < row.size(); ++j) {
            v.push_back(parse_value(row[j], line));
        }
        if (rows[row[0]].find(day) == rows[row[0]].end()) {
            if (panel.location_index(row[0]) < 0) {
                panel.locations.push_back(row[0]);
            }
        }
        if (!rows[row[0]].emplace(day, std::move(v)).second) {
            throw DataValidationError("duplicate covariate row for '" + row[0] + "' on " + row[1], line);
        }
        first = std::min(first, day);
        last = std::max(last, day);
    }
    if (panel.locations.empty()) {
        return panel;
    }
    panel.start = first;
    panel.n_days = days_between(first, last) + 1;
    for (const auto& loc : panel.locations) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Constant(panel.n_days, panel.size(),
                                                      std::numeric_limits<double>::quiet_NaN());
        for (const auto& [day, v] : rows[loc]) {
            for (std::size_t j = 0; j < v.size(); ++j) {
                m(days_between(first, day), static_cast<Index>(j)) = v[j];
            }
        }
        panel.values.push_back(std::move(m));
    }
    panel.validate();
    return panel;
}

CovariatePanel load_covariates(const std::filesystem::path& values, const std::filesystem::path* meta)
{
    std::ifstream in(values);
    if (!in) {
        throw MissingInputError("cannot open '" + values.string() + "'");
    }
    if (!meta) {
        return parse_covariates(in, nullptr);
    }
    std::ifstream meta_in(*meta);
    if (!meta_in) {
        throw MissingInputError("cannot open '" + meta->string() + "'");
    }
    return parse_covariates(in, &meta_in);
}

} // namespace superspread
