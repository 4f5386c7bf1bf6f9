#include "superspread/cli.hpp"

#include "superspread/features.hpp"
#include "superspread/inference.hpp"
#include "superspread/renewal.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace superspread::cli
{

namespace fs = std::filesystem;

namespace
{

std::string utc_now()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects input/output digests and writes manifest.json last.
class Manifest
{
public:
    Manifest(std::string command, const GlobalOptions& global, const RunConfig& config)
        : m_command(std::move(command))
        , m_dir(global.out)
        , m_config_digest(sha256_hex(config.values.canonical()))
        , m_started(utc_now())
    {
        if (global.config) {
            m_config_file = global.config->string();
        }
    }

    void input(const fs::path& file) { m_inputs[file.string()] = sha256_file(file); }

    void output(const std::string& name, const std::string& content)
    {
        write_text_file(m_dir / name, content);
        m_outputs[name] = sha256_hex(content);
    }

    void note(const std::string& key, nlohmann::json value) { m_notes[key] = std::move(value); }

    void finish(std::uint64_t seed)
    {
        nlohmann::json j;
        j["command"] = m_command;
        j["tool_version"] = version;
        j["seed"] = seed;
        j["config_digest"] = m_config_digest;
        j["config_file"] = m_config_file;
        j["inputs"] = m_inputs;
        j["outputs"] = m_outputs;
        if (!m_notes.empty()) {
            j["notes"] = m_notes;
        }
        j["started"] = m_started;
        j["finished"] = utc_now();
        write_text_file(m_dir / "manifest.json", j.dump(2) + "\n");
    }

private:
    std::string m_command;
    fs::path m_dir;
    std::string m_config_digest;
    std::string m_config_file;
    std::string m_started;
    std::map<std::string, std::string> m_inputs;
    std::map<std::string, std::string> m_outputs;
    nlohmann::json m_notes = nlohmann::json::object();
};

std::uint64_t resolve_seed(const GlobalOptions& global, const RunConfig& config)
{
    return global.seed ? *global.seed : config.values.get_uint64("seed", 1);
}

std::vector<AgeGroup> age_groups_from(const RunConfig& config)
{
    const auto labels = config.values.get_list("age_groups");
    if (labels.empty()) {
        return main_age_groups();
    }
    std::vector<AgeGroup> out;
    for (const auto& label : labels) {
        try {
            out.push_back(parse_age_group(label));
        }
        catch (const DataValidationError&) {
            throw ConfigError("unknown age group '" + label + "' in config");
        }
    }
    return out;
}

Day config_date(const RunConfig& config, const std::string& key, const std::string& fallback)
{
    const std::string text = config.values.get_string(key, fallback);
    try {
        return parse_date(text);
    }
    catch (const DataValidationError&) {
        throw ConfigError("config key '" + key + "' is not a YYYY-MM-DD date");
    }
}

/// Value of `key.<qualifier>` when present, else `key`, else fallback.
double qualified(const RunConfig& config, const std::string& key, const std::string& qualifier, double fallback)
{
    return config.values.get_double(key + "." + qualifier, config.values.get_double(key, fallback));
}

template <typename Writer>
std::string render(Writer writer)
{
    std::ostringstream out;
    writer(out);
    return out.str();
}

// ---- simulate -------------------------------------------------------------------

double default_cfr(AgeGroup age)
{
    switch (age) {
    case AgeGroup::A00_04:
    case AgeGroup::A05_14: return 0.0001;
    case AgeGroup::A15_34: return 0.0005;
    case AgeGroup::A35_59: return 0.005;
    case AgeGroup::A60_79: return 0.06;
    case AgeGroup::A80_plus: return 0.25;
    }
    return 0;
}

struct SyntheticWeather
{
    std::vector<WeatherRecord> records;
    /// Per location: (window days x 2) raw temperature and humidity.
    std::vector<Eigen::MatrixXd> window;
};

SyntheticWeather synthetic_weather(const std::vector<std::string>& locations, Day start, int horizon,
                                   std::uint64_t seed)
{
    SyntheticWeather out;
    const int span = std::max(horizon, 365);
    for (std::size_t l = 0; l < locations.size(); ++l) {
        Rng rng = derive_stream(seed, (std::uint64_t{1} << 42) + l);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double offset = 1.5 * static_cast<double>(l % 5) - 3.0;
        Eigen::MatrixXd window(horizon, 2);
        for (int d = 0; d < span; ++d) {
            const Day day = start + d;
            const std::chrono::year_month_day ymd{day};
            const int doy = days_between(std::chrono::sys_days{ymd.year() / std::chrono::January / 1}, day);
            const double season = std::cos(2 * std::numbers::pi * (doy - 15) / 365.0);
            const double temp = 10.0 + offset - 9.0 * season + 2.0 * normal(rng);
            const double hum = std::clamp(78.0 + 8.0 * season + 4.0 * normal(rng), 20.0, 100.0);
            // Rounded like station data so the CSV round-trips exactly.
            const double t_r = std::round(temp * 10) / 10;
            const double h_r = std::round(hum * 10) / 10;
            out.records.push_back({locations[l], day, t_r, h_r});
            if (d < horizon) {
                window(d, 0) = t_r;
                window(d, 1) = h_r;
            }
        }
        out.window.push_back(std::move(window));
    }
    return out;
}

void cmd_simulate_impl(const GlobalOptions& global, std::ostream& log)
{
    const RunConfig config = load_run_config(global);
    const KeyValueConfig& kv = config.values;
    const std::uint64_t seed = resolve_seed(global, config);
    Manifest manifest("simulate", global, config);

    const int horizon = kv.get_int("horizon", 60);
    if (horizon < 0) {
        throw ConfigError("horizon must be >= 0");
    }
    const Day start = config_date(config, "start_date", "2020-03-01");
    std::vector<std::string> locations = kv.get_list("locations");
    if (locations.empty()) {
        const int n = kv.get_int("n_locations", 3);
        if (n < 1) {
            throw ConfigError("n_locations must be >= 1");
        }
        for (int l = 1; l <= n; ++l) {
            locations.push_back((l < 10 ? "loc0" : "loc") + std::to_string(l));
        }
    }
    const std::vector<AgeGroup> ages = age_groups_from(config);
    std::vector<CompartmentKey> compartments;
    PopulationTable population;
    for (const auto& loc : locations) {
        for (AgeGroup a : ages) {
            compartments.push_back({loc, a});
            const double pop = qualified(config, "population", std::string(to_string(a)), 100000.0);
            if (!(pop > 0)) {
                throw ConfigError("population must be > 0");
            }
            population.by_compartment[{loc, a}] = pop;
        }
    }

    const SyntheticWeather weather = synthetic_weather(locations, start, horizon, seed);
    std::vector<InterventionSpan> interventions;
    CovariatePanel cov;
    if (auto file = config.optional_path("covariates_file")) {
        const auto meta = config.optional_path("covariates_meta_file");
        cov = load_covariates(*file, meta ? &*meta : nullptr);
        manifest.input(*file);
        if (meta) {
            manifest.input(*meta);
        }
        if (cov.start != start || cov.n_days < horizon) {
            throw DataValidationError("covariates file does not cover the simulation window");
        }
    }
    else {
        cov.start = start;
        cov.n_days = horizon;
        cov.locations = locations;
        const auto requested = kv.has("covariates") ? kv.get_list("covariates")
                                                    : std::vector<std::string>{"lockdown", "temperature",
                                                                               "traced_ratio"};
        const int lockdown_day = kv.get_int("lockdown_day", horizon / 3);
        cov.values.assign(locations.size(), Eigen::MatrixXd(horizon, static_cast<Index>(requested.size())));
        Rng rng = derive_stream(seed, (std::uint64_t{1} << 43));
        std::normal_distribution<double> normal(0.0, 0.03);
        for (std::size_t j = 0; j < requested.size(); ++j) {
            const std::string& name = requested[j];
            cov.names.push_back(name);
            cov.stats.emplace_back();
            if (name == "lockdown") {
                cov.kinds.push_back(CovariateKind::Dummy);
            }
            else if (name == "temperature" || name == "humidity" || name == "traced_ratio") {
                cov.kinds.push_back(CovariateKind::Real);
            }
            else {
                throw ConfigError("unknown synthetic covariate '" + name +
                                  "' (use lockdown, temperature, humidity, traced_ratio or covariates_file)");
            }
            for (std::size_t l = 0; l < locations.size(); ++l) {
                const int begin = lockdown_day + static_cast<int>(l % 3);
                if (name == "lockdown" && begin < horizon) {
                    interventions.push_back({locations[l], "lockdown", start + begin, std::nullopt});
                }
                for (int t = 0; t < horizon; ++t) {
                    double& x = cov.values[l](t, static_cast<Index>(j));
                    if (name == "lockdown") {
                        x = t >= begin ? 1.0 : 0.0;
                    }
                    else if (name == "temperature") {
                        x = weather.window[l](t, 0);
                    }
                    else if (name == "humidity") {
                        x = weather.window[l](t, 1);
                    }
                    else {
                        const double ramp = horizon > 1 ? static_cast<double>(t) / (horizon - 1) : 0.0;
                        x = std::clamp(0.2 + 0.6 * ramp + normal(rng), 0.0, 1.0);
                    }
                }
            }
        }
        for (const char* name : {"temperature", "humidity"}) {
            if (cov.covariate_index(name) >= 0 && horizon > 1) {
                cov = standardize(cov, name);
            }
        }
    }

    ModelParams params = make_params(compartments, cov.names);
    for (std::size_t c = 0; c < compartments.size(); ++c) {
        params.effects.r0(static_cast<Index>(c)) =
            qualified(config, "r0", std::string(to_string(compartments[c].age_group)), 2.5);
    }
    const std::map<std::string, double> default_beta = {
        {"lockdown", -0.5}, {"temperature", -0.1}, {"humidity", 0.0}, {"traced_ratio", -0.2}};
    for (std::size_t a = 0; a < params.effects.age_groups.size(); ++a) {
        const std::string age(to_string(params.effects.age_groups[a]));
        params.dispersion(static_cast<Index>(a)) = qualified(config, "dispersion", age, 0.5);
        for (std::size_t j = 0; j < cov.names.size(); ++j) {
            const auto it = default_beta.find(cov.names[j]);
            const double base = kv.get_double("beta." + cov.names[j], it == default_beta.end() ? 0.0 : it->second);
            params.effects.beta(static_cast<Index>(a), static_cast<Index>(j)) =
                kv.get_double("beta." + age + "." + cov.names[j], base);
        }
    }
    params.reporting_rate = kv.get_double("reporting_rate", 0.25);
    params.generation_mean = kv.get_double("generation_mean", 5.5);
    params.generation_sd = kv.get_double("generation_sd", 2.0);
    params.incubation_mean = kv.get_double("incubation_mean", 5.5);
    params.incubation_sd = kv.get_double("incubation_sd", 2.0);
    params.max_lag = kv.get_int("max_lag", default_max_lag);
    params.init_mean = kv.get_double("init_mean", 8.0);
    params.init_days = kv.get_int("init_days", 6);
    params.effects.noise_sd = kv.get_double("noise_sd", 0.0);
    if (params.init_days < 1 || params.init_mean < 0 || params.effects.noise_sd < 0) {
        throw ConfigError("init_days must be >= 1, init_mean and noise_sd >= 0");
    }
    const TransmissionVariant variant = parse_variant(kv.get_string("variant", "per-individual"));
    params.effects.validate_against(cov);

    const SimulatedPanel sim = simulate(params, cov, horizon, variant, seed);
    log << "simulated " << compartments.size() << " compartments over " << horizon << " days: "
        << sim.sampled_cases.sum() << " symptomatic cases\n";

    // Line list: one record per sampled case, onset on the sampled day.
    const double report_delay = kv.get_double("report_delay_mean", 3.0);
    const double asymptomatic = kv.get_double("asymptomatic_ratio", 0.0);
    if (report_delay < 0 || asymptomatic < 0 || asymptomatic >= 1) {
        throw ConfigError("report_delay_mean must be >= 0 and asymptomatic_ratio in [0, 1)");
    }
    std::vector<CaseRecord> records;
    for (std::size_t c = 0; c < compartments.size(); ++c) {
        Rng rng = derive_stream(seed, (std::uint64_t{1} << 41) + c);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        const double cfr = qualified(config, "cfr", std::string(to_string(compartments[c].age_group)),
                                     default_cfr(compartments[c].age_group));
        for (int t = 0; t < horizon; ++t) {
            for (std::int64_t n = 0; n < sim.sampled_cases(static_cast<Index>(c), t); ++n) {
                CaseRecord r;
                r.onset = start + t;
                r.report = *r.onset + static_cast<int>(poisson_sample(report_delay, rng));
                r.age_group = compartments[c].age_group;
                r.location = compartments[c].location;
                r.died = uniform(rng) < cfr;
                records.push_back(r);
                if (asymptomatic > 0 && uniform(rng) < asymptomatic / (1 - asymptomatic)) {
                    CaseRecord a = r;
                    a.onset.reset();
                    a.died = false;
                    records.push_back(a);
                }
            }
        }
    }

    manifest.output("cases.csv", render([&](std::ostream& o) { write_cases(o, records); }));
    manifest.output("population.csv", render([&](std::ostream& o) { write_population(o, population); }));
    manifest.output("interventions.csv", render([&](std::ostream& o) { write_interventions(o, interventions); }));
    manifest.output("weather.csv", render([&](std::ostream& o) { write_weather(o, weather.records); }));
    std::ostringstream values, meta;
    write_covariates(values, meta, cov);
    manifest.output("covariates.csv", values.str());
    manifest.output("covariates_meta.csv", meta.str());

    std::ostringstream latent;
    latent << "location,age_group,date,infections,viral_load,r_value,expected_cases,sampled_cases\n";
    for (std::size_t c = 0; c < compartments.size(); ++c) {
        const LatentTrajectory& traj = sim.latent[c];
        for (Index k = 0; k < traj.infections.size(); ++k) {
            const int t = static_cast<int>(k) - traj.init_days;
            latent << compartments[c].location << ',' << to_string(compartments[c].age_group) << ','
                   << format_date(start + t) << ',' << traj.infections(k) << ','
                   << format_number(traj.viral_load(k)) << ','
                   << (t >= 0 ? format_number(traj.r_values(t)) : "NA") << ','
                   << (t >= 0 ? format_number(sim.expected_cases(static_cast<Index>(c), t)) : "NA") << ','
                   << (t >= 0 ? std::to_string(sim.sampled_cases(static_cast<Index>(c), t)) : "NA") << '\n';
        }
    }
    manifest.output("latent.csv", latent.str());

    std::ostringstream truth;
    truth << "parameter,value\n";
    for (std::size_t c = 0; c < compartments.size(); ++c) {
        truth << "r0[" << to_string(compartments[c]) << "]," << format_number(params.effects.r0(static_cast<Index>(c)))
              << '\n';
    }
    for (std::size_t a = 0; a < params.effects.age_groups.size(); ++a) {
        for (std::size_t j = 0; j < cov.names.size(); ++j) {
            truth << "beta[" << to_string(params.effects.age_groups[a]) << ':' << cov.names[j] << "],"
                  << format_number(params.effects.beta(static_cast<Index>(a), static_cast<Index>(j))) << '\n';
        }
    }
    for (std::size_t a = 0; a < params.effects.age_groups.size(); ++a) {
        truth << "psi[" << to_string(params.effects.age_groups[a]) << "],"
              << format_number(params.dispersion(static_cast<Index>(a))) << '\n';
    }
    truth << "generation_mean," << format_number(params.generation_mean) << '\n'
          << "incubation_mean," << format_number(params.incubation_mean) << '\n'
          << "init_mean," << format_number(params.init_mean) << '\n'
          << "reporting_rate," << format_number(params.reporting_rate) << '\n';
    manifest.output("truth.csv", truth.str());
    manifest.note("variant", std::string(to_string(variant)));
    manifest.finish(seed);
}

// ---- features -------------------------------------------------------------------

void cmd_features_impl(const GlobalOptions& global, std::ostream& log)
{
    const RunConfig config = load_run_config(global);
    const KeyValueConfig& kv = config.values;
    Manifest manifest("features", global, config);

    const fs::path cases_path = config.path("cases");
    const fs::path population_path = config.path("population");
    const auto records = load_cases(cases_path);
    manifest.input(cases_path);
    const auto population = load_population(population_path);
    manifest.input(population_path);

    std::optional<std::vector<WeatherRecord>> weather;
    if (auto p = config.optional_path("weather")) {
        weather = load_weather(*p);
        manifest.input(*p);
    }
    std::vector<InterventionSpan> interventions;
    if (auto p = config.optional_path("interventions")) {
        interventions = load_interventions(*p);
        manifest.input(*p);
    }
    std::optional<std::vector<HolidayRecord>> calendar;
    if (auto p = config.optional_path("calendar")) {
        calendar = load_calendar(*p);
        manifest.input(*p);
    }

    FeatureSpec spec;
    std::optional<Day> first_onset, last_onset;
    for (const auto& r : records) {
        if (r.onset) {
            first_onset = first_onset ? std::min(*first_onset, *r.onset) : *r.onset;
            last_onset = last_onset ? std::max(*last_onset, *r.onset) : *r.onset;
        }
    }
    if (!kv.has("start_date") && !first_onset) {
        throw ConfigError("start_date is required when the line list has no onset dates");
    }
    spec.start = kv.has("start_date") ? config_date(config, "start_date", "") : *first_onset;
    if (kv.has("n_days")) {
        spec.n_days = kv.get_int("n_days", 0);
    }
    else if (kv.has("end_date")) {
        spec.n_days = days_between(spec.start, config_date(config, "end_date", "")) + 1;
    }
    else if (last_onset) {
        spec.n_days = days_between(spec.start, *last_onset) + 1;
    }
    if (spec.n_days <= 0) {
        throw ConfigError("feature window is empty");
    }
    spec.age_groups = age_groups_from(config);
    spec.traced_ratio = kv.get_bool("traced_ratio", true);
    spec.incidence = kv.get_bool("incidence", true);
    spec.cumulative_incidence = kv.get_bool("cumulative_incidence", true);
    spec.weekday = kv.get_bool("weekday", true);
    spec.cumulative_lag = kv.get_int("cumulative_lag", 14);
    if (kv.has("standardize")) {
        spec.standardize = kv.get_list("standardize");
    }

    const Panel panel = build_panel(spec, records, population, weather ? &*weather : nullptr, interventions,
                                    calendar ? &*calendar : nullptr);
    log << "panel: " << panel.compartments.size() << " compartments x " << panel.n_days << " days, "
        << panel.covariates.size() << " covariates\n";
    manifest.output("panel.csv", render([&](std::ostream& o) { write_panel(o, panel); }));
    std::ostringstream values, meta;
    write_covariates(values, meta, panel.covariates);
    manifest.output("covariates.csv", values.str());
    manifest.output("covariates_meta.csv", meta.str());
    manifest.finish(resolve_seed(global, config));
}

// ---- fit ------------------------------------------------------------------------

/// Panel and covariates named by `panel`, `covariates`, `covariates_meta` (defaults next to the config).
Panel load_fit_panel(const RunConfig& config, Manifest& manifest)
{
    const fs::path panel_path = config.values.has("panel") ? config.path("panel") : config.base_dir / "panel.csv";
    const fs::path cov_path =
        config.values.has("covariates") ? config.path("covariates") : config.base_dir / "covariates.csv";
    std::optional<fs::path> meta_path = config.optional_path("covariates_meta");
    if (!meta_path && fs::exists(cov_path.parent_path() / "covariates_meta.csv")) {
        meta_path = cov_path.parent_path() / "covariates_meta.csv";
    }
    CovariatePanel cov = load_covariates(cov_path, meta_path ? &*meta_path : nullptr);
    manifest.input(cov_path);
    if (meta_path) {
        manifest.input(*meta_path);
    }
    if (config.values.has("use_covariates")) {
        const auto keep = config.values.get_list("use_covariates");
        CovariatePanel subset = cov;
        subset.names.clear();
        subset.kinds.clear();
        subset.stats.clear();
        for (auto& m : subset.values) {
            m.resize(cov.n_days, static_cast<Index>(keep.size()));
        }
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const int j = cov.covariate_index(keep[k]);
            if (j < 0) {
                throw ConfigError("use_covariates names unknown covariate '" + keep[k] + "'");
            }
            subset.names.push_back(keep[k]);
            subset.kinds.push_back(cov.kinds[static_cast<std::size_t>(j)]);
            subset.stats.push_back(cov.stats[static_cast<std::size_t>(j)]);
            for (std::size_t l = 0; l < cov.values.size(); ++l) {
                subset.values[l].col(static_cast<Index>(k)) = cov.values[l].col(j);
            }
        }
        cov = std::move(subset);
    }
    Panel panel = load_panel(panel_path, std::move(cov));
    manifest.input(panel_path);
    return panel;
}

PriorConfig priors_from(const KeyValueConfig& kv)
{
    PriorConfig p;
    p.beta_mean = kv.get_double("prior.beta_mean", p.beta_mean);
    p.beta_sd = kv.get_double("prior.beta_sd", p.beta_sd);
    p.noise_sd = kv.get_double("prior.noise_sd", p.noise_sd);
    p.reporting_rate = kv.get_double("prior.reporting_rate", p.reporting_rate);
    p.reporting_rate_sd = kv.get_double("prior.reporting_rate_sd", p.reporting_rate_sd);
    p.delay_mean = kv.get_double("prior.delay_mean", p.delay_mean);
    p.delay_mean_sd = kv.get_double("prior.delay_mean_sd", p.delay_mean_sd);
    p.delay_sd = kv.get_double("prior.delay_sd", p.delay_sd);
    p.dispersion_sd = kv.get_double("prior.dispersion_sd", p.dispersion_sd);
    p.init_mean = kv.get_double("prior.init_mean", p.init_mean);
    p.init_sd = kv.get_double("prior.init_sd", p.init_sd);
    p.init_days = kv.get_int("prior.init_days", p.init_days);
    p.r0_mean = kv.get_double("prior.r0_mean", p.r0_mean);
    p.r0_sd = kv.get_double("prior.r0_sd", p.r0_sd);
    p.max_lag = kv.get_int("prior.max_lag", p.max_lag);
    for (const auto& key : kv.keys_with_prefix("prior.")) {
        static const std::set<std::string> known = {
            "prior.beta_mean",  "prior.beta_sd",      "prior.noise_sd",      "prior.reporting_rate",
            "prior.reporting_rate_sd", "prior.delay_mean", "prior.delay_mean_sd", "prior.delay_sd",
            "prior.dispersion_sd", "prior.init_mean", "prior.init_sd",      "prior.init_days",
            "prior.r0_mean",    "prior.r0_sd",        "prior.max_lag"};
        if (!known.count(key)) {
            throw ConfigError("unknown prior key '" + key + "'");
        }
    }
    p.validate();
    return p;
}

std::string summary_csv(const PosteriorSummary& s)
{
    std::ostringstream out;
    out << "parameter,mean,sd,q2.5,q97.5,rhat\n";
    auto row = [&](const ParameterSummary& p) {
        out << p.name << ',' << format_number(p.mean) << ',' << format_number(p.sd) << ',' << format_number(p.q025)
            << ',' << format_number(p.q975) << ',' << format_number(p.rhat) << '\n';
    };
    for (const auto& p : s.parameters) {
        row(p);
    }
    for (const auto& o : s.offspring) {
        row(o.r0);
        row(o.infecting_ratio);
        row(o.top_share);
    }
    for (const auto& e : s.effects) {
        row(e.change_pct);
    }
    return out.str();
}

void cmd_fit_impl(const GlobalOptions& global, bool reduced_form, std::ostream& log)
{
    const RunConfig config = load_run_config(global);
    const KeyValueConfig& kv = config.values;
    const std::uint64_t seed = resolve_seed(global, config);
    Manifest manifest(reduced_form ? "fit --reduced-form" : "fit", global, config);
    const Panel panel = load_fit_panel(config, manifest);

    if (reduced_form) {
        const std::string grouping = kv.get_string("grouping", "month");
        const auto obs = growth_observations(panel, grouping);
        const auto estimates = estimate_dispersion_reduced(obs, kv.get_int("bootstrap", 1000), seed,
                                                           kv.get_double("level", 0.95));
        std::ostringstream out;
        out << "group,psi_hat,ci_low,ci_high,r_hat,variance,mean_prior_count,n_units,n_obs,estimable\n";
        for (const auto& e : estimates) {
            out << e.group << ',' << format_number(e.psi_hat) << ',' << format_number(e.ci_low) << ','
                << format_number(e.ci_high) << ',' << format_number(e.r_hat) << ',' << format_number(e.variance)
                << ',' << format_number(e.mean_prior_count) << ',' << e.n_units << ',' << e.n_obs << ','
                << (e.estimable ? 1 : 0) << '\n';
            log << "group " << e.group << ": psi_hat " << format_number(e.psi_hat) << " ["
                << format_number(e.ci_low) << ", " << format_number(e.ci_high) << "]\n";
        }
        manifest.output("reduced_form.csv", out.str());
        manifest.finish(seed);
        return;
    }

    const PriorConfig priors = priors_from(kv);
    McmcConfig mc;
    mc.n_chains = kv.get_int("chains", 2);
    mc.n_burn = kv.get_int("burn_in", 1000);
    mc.n_keep = kv.get_int("iterations", 1000);
    mc.thin = kv.get_int("thin", 1);
    mc.threads = kv.get_int("threads", 0);
    mc.seed = seed;
    mc.fixed = kv.get_list("fixed");
    for (const auto& m : kv.get_list("monitor")) {
        if (m == "noise") {
            mc.monitor_noise = true;
        }
        else if (m == "latent") {
            mc.monitor_latent = true;
        }
        else {
            throw ConfigError("monitor accepts 'noise' and 'latent', got '" + m + "'");
        }
    }
    const bool quiet = global.quiet;
    mc.progress = [&log, quiet](int chain, int it, int total) {
        if (!quiet) {
            log << "chain " << chain + 1 << ": iteration " << it << "/" << total << "\n" << std::flush;
        }
    };
    const PosteriorDraws draws = mcmc_fit(panel, priors, mc);

    for (std::size_t k = 0; k < draws.chains.size(); ++k) {
        const Eigen::MatrixXd& chain = draws.chains[k];
        std::string out = "iteration,parameter,value\n";
        for (Index i = 0; i < chain.rows(); ++i) {
            const std::string iteration = std::to_string(draws.n_burn + (i + 1) * draws.thin);
            for (std::size_t j = 0; j < draws.names.size(); ++j) {
                out += iteration;
                out += ',';
                out += draws.names[j];
                out += ',';
                out += format_number(chain(i, static_cast<Index>(j)));
                out += '\n';
            }
        }
        manifest.output("draws_chain" + std::to_string(k + 1) + ".csv", out);
    }
    const PosteriorSummary summary = summarize(draws);
    manifest.output("summary.csv", summary_csv(summary));
    std::ostringstream acc;
    acc << "block,acceptance_rate\n";
    for (const auto& [block, rate] : draws.acceptance) {
        acc << block << ',' << format_number(rate) << '\n';
    }
    manifest.output("acceptance.csv", acc.str());
    double max_rhat = 1;
    for (Index j = 0; j < draws.rhat.size(); ++j) {
        if (std::isfinite(draws.rhat(j))) {
            max_rhat = std::max(max_rhat, draws.rhat(j));
        }
    }
    log << "max Rhat " << format_number(max_rhat) << "\n";
    manifest.note("max_rhat", max_rhat);
    manifest.finish(seed);
}

// ---- report ---------------------------------------------------------------------

PosteriorDraws read_draws(const std::vector<fs::path>& files, const Panel& panel, Manifest& manifest)
{
    PosteriorDraws draws;
    for (const auto& file : files) {
        const CsvTable table = read_csv_file(file);
        require_header(table, {"iteration", "parameter", "value"}, file.filename().string());
        manifest.input(file);
        std::vector<std::string> names;
        std::map<std::string, std::size_t> column;
        std::vector<std::int64_t> iterations;
        std::vector<std::vector<double>> rows;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            const std::int64_t it = parse_int64(row[0], table.lines[r]);
            if (iterations.empty() || iterations.back() != it) {
                iterations.push_back(it);
                rows.emplace_back();
            }
            auto [pos, inserted] = column.emplace(row[1], names.size());
            if (inserted) {
                if (iterations.size() > 1) {
                    throw DataValidationError("parameter '" + row[1] + "' missing from earlier iterations",
                                              table.lines[r]);
                }
                names.push_back(row[1]);
            }
            auto& values = rows.back();
            if (values.size() != pos->second) {
                throw DataValidationError("parameters out of order within iteration", table.lines[r]);
            }
            values.push_back(parse_double(row[2], table.lines[r]));
        }
        if (draws.names.empty()) {
            draws.names = names;
        }
        else if (draws.names != names) {
            throw DataValidationError("draw files disagree on the parameter list");
        }
        Eigen::MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(names.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != names.size()) {
                throw DataValidationError("incomplete iteration in " + file.string());
            }
            m.row(static_cast<Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(),
                                                                               static_cast<Index>(rows[i].size()));
        }
        draws.chains.push_back(std::move(m));
    }
    if (draws.chains.empty() || draws.chains.front().rows() == 0) {
        throw DataValidationError("no draws found");
    }
    for (const auto& c : draws.chains) {
        if (c.rows() != draws.chains.front().rows()) {
            throw DataValidationError("draw files hold different numbers of iterations");
        }
    }
    draws.n_keep = static_cast<int>(draws.chains.front().rows());

    // Covariates present in the draws versus the panel.
    std::set<std::string> drawn;
    std::set<AgeGroup> ages;
    for (const auto& name : draws.names) {
        if (name.starts_with("beta[")) {
            const auto comma = name.find(':');
            drawn.insert(name.substr(comma + 1, name.size() - comma - 2));
        }
    }
    const std::set<std::string> given(panel.covariates.names.begin(), panel.covariates.names.end());
    if (drawn != given) {
        std::string only_draws, only_panel;
        for (const auto& n : drawn) {
            if (!given.count(n)) {
                only_draws += (only_draws.empty() ? "" : " ") + n;
            }
        }
        for (const auto& n : given) {
            if (!drawn.count(n)) {
                only_panel += (only_panel.empty() ? "" : " ") + n;
            }
        }
        throw DataValidationError("covariate sets differ; only in draws: [" + only_draws + "], only in panel: [" +
                                  only_panel + "]");
    }
    draws.compartments = panel.compartments;
    draws.covariates = panel.covariates.names;
    draws.age_groups = EffectSet::for_compartments(panel.compartments, panel.covariates.names).age_groups;
    for (const auto& key : draws.compartments) {
        if (draws.column("r0[" + to_string(key) + "]") < 0) {
            throw DataValidationError("draws have no R0 for compartment " + to_string(key));
        }
    }
    draws.rhat.resize(static_cast<Index>(draws.names.size()));
    for (Index j = 0; j < draws.rhat.size(); ++j) {
        std::vector<Eigen::VectorXd> series;
        for (const auto& c : draws.chains) {
            series.push_back(c.col(j));
        }
        draws.rhat(j) = draws.chains.size() >= 2 ? gelman_rubin(series) : std::numeric_limits<double>::quiet_NaN();
    }
    return draws;
}

void cmd_report_impl(const GlobalOptions& global, std::ostream& log)
{
    const RunConfig config = load_run_config(global);
    const KeyValueConfig& kv = config.values;
    Manifest manifest("report", global, config);
    const Panel panel = load_fit_panel(config, manifest);

    std::vector<fs::path> files;
    if (kv.has("draws")) {
        for (const auto& f : kv.get_list("draws")) {
            files.push_back(fs::path(f).is_absolute() ? fs::path(f) : config.base_dir / f);
        }
    }
    else {
        const fs::path dir = kv.has("fit_dir") ? config.path("fit_dir") : config.base_dir;
        for (int k = 1;; ++k) {
            const fs::path f = dir / ("draws_chain" + std::to_string(k) + ".csv");
            if (!fs::exists(f)) {
                break;
            }
            files.push_back(f);
        }
        if (files.empty()) {
            throw MissingInputError("no draws_chain<k>.csv files in '" + dir.string() + "'");
        }
    }
    const PosteriorDraws draws = read_draws(files, panel, manifest);
    const PosteriorSummary summary = summarize(draws);

    // Age weights: population share by default.
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(static_cast<Index>(draws.age_groups.size()));
    if (kv.has("age_weights")) {
        const auto list = kv.get_list("age_weights");
        if (list.size() != draws.age_groups.size()) {
            throw ConfigError("age_weights needs one weight per age group");
        }
        for (std::size_t a = 0; a < list.size(); ++a) {
            weights(static_cast<Index>(a)) = parse_double(list[a]);
        }
    }
    else {
        for (std::size_t c = 0; c < panel.compartments.size(); ++c) {
            const auto it = std::find(draws.age_groups.begin(), draws.age_groups.end(),
                                      panel.compartments[c].age_group);
            weights(it - draws.age_groups.begin()) += panel.populations(static_cast<Index>(c));
        }
    }

    std::ostringstream effects;
    effects << "age_group,covariate,mean,sd,q2.5,q97.5,rhat\n";
    for (const auto& e : summary.effects) {
        effects << to_string(e.age_group) << ',' << e.covariate << ',' << format_number(e.change_pct.mean) << ','
                << format_number(e.change_pct.sd) << ',' << format_number(e.change_pct.q025) << ','
                << format_number(e.change_pct.q975) << ',' << format_number(e.change_pct.rhat) << '\n';
    }
    manifest.output("effects.csv", effects.str());

    std::ostringstream offspring;
    offspring << "age_group,r0_mean,r0_sd,psi_mean,psi_sd,infecting_ratio_mean,infecting_ratio_sd,top_share_mean,"
                 "top_share_sd\n";
    for (const auto& o : summary.offspring) {
        offspring << to_string(o.age_group) << ',' << format_number(o.r0.mean) << ',' << format_number(o.r0.sd) << ','
                  << format_number(o.psi.mean) << ',' << format_number(o.psi.sd) << ','
                  << format_number(o.infecting_ratio.mean) << ',' << format_number(o.infecting_ratio.sd) << ','
                  << format_number(o.top_share.mean) << ',' << format_number(o.top_share.sd) << '\n';
    }
    manifest.output("offspring_table.csv", offspring.str());

    // Total effects per covariate group, quantiles over draws.
    std::map<std::string, std::vector<std::string>> groups = {
        {"tracing", {"traced_ratio"}}, {"information", {"incidence_log"}}, {"season", {"temperature", "humidity"}}};
    for (const auto& key : kv.keys_with_prefix("group.")) {
        groups[key.substr(6)] = kv.get_list(key);
    }
    const Eigen::MatrixXd pooled = draws.pooled();
    std::ostringstream totals;
    totals << "group,date,mean,q2.5,q97.5\n";
    for (const auto& [group, members] : groups) {
        std::vector<std::string> present;
        for (const auto& m : members) {
            if (panel.covariates.covariate_index(m) >= 0) {
                present.push_back(m);
            }
        }
        if (present.empty()) {
            continue;
        }
        Eigen::MatrixXd series(pooled.rows(), panel.n_days);
        for (Index i = 0; i < pooled.rows(); ++i) {
            series.row(i) =
                total_effect(effects_from_draw(draws, pooled.row(i)), panel.covariates, present, weights).transpose();
        }
        for (int t = 0; t < panel.n_days; ++t) {
            const Eigen::VectorXd col = series.col(t);
            totals << group << ',' << format_date(panel.start + t) << ',' << format_number(col.mean()) << ','
                   << format_number(quantile(col, 0.025)) << ',' << format_number(quantile(col, 0.975)) << '\n';
        }
    }
    manifest.output("total_effects.csv", totals.str());

    const int traced = panel.covariates.covariate_index("traced_ratio");
    if (traced >= 0) {
        const double rate = kv.get_double("reporting_rate", 0.25);
        std::ostringstream tracing;
        tracing << "age_group,reduction_mean,q2.5,q97.5,truncated_fraction\n";
        for (AgeGroup age : draws.age_groups) {
            const int j = draws.column("beta[" + std::string(to_string(age)) + ":traced_ratio]");
            Eigen::VectorXd reduction(pooled.rows());
            double truncated = 0;
            for (Index i = 0; i < pooled.rows(); ++i) {
                const TracingEffect e = individual_tracing_effect(pooled(i, j), rate);
                reduction(i) = e.reduction;
                truncated += e.truncated ? 1 : 0;
            }
            tracing << to_string(age) << ',' << format_number(reduction.mean()) << ','
                    << format_number(quantile(reduction, 0.025)) << ',' << format_number(quantile(reduction, 0.975))
                    << ',' << format_number(truncated / static_cast<double>(pooled.rows())) << '\n';
        }
        manifest.output("tracing_individual.csv", tracing.str());
    }

    if (auto weather_path = config.optional_path("weather")) {
        const auto weather = load_weather(*weather_path);
        manifest.input(*weather_path);
        const Climatology clim = climatology_from_weather(weather);
        EffectSet mean_effects = effects_from_draw(draws, pooled.colwise().mean());
        const SeasonalSeries s =
            seasonal_extrapolation(mean_effects, panel.covariates, clim, weights, kv.get_int("smoothing_window", 14));
        std::ostringstream seasonal;
        seasonal << "day_of_year,multiplier,smoothed\n";
        for (Index d = 0; d < s.multiplier.size(); ++d) {
            seasonal << d + 1 << ',' << format_number(s.multiplier(d)) << ',' << format_number(s.smoothed(d)) << '\n';
        }
        manifest.output("seasonal.csv", seasonal.str());
        manifest.note("seasonal_peak_ratio", s.peak_ratio);
        log << "seasonal peak-to-trough ratio " << format_number(s.peak_ratio) << "\n";
    }
    log << "report written for " << draws.chains.size() << " chains x " << draws.n_keep << " draws\n";
    manifest.finish(resolve_seed(global, config));
}

// ---- diagnostics ----------------------------------------------------------------

void cmd_diagnostics_impl(const GlobalOptions& global, std::ostream& log)
{
    const RunConfig config = load_run_config(global);
    Manifest manifest("diagnostics", global, config);
    const fs::path cases_path = config.path("cases");
    const auto records = load_cases(cases_path);
    manifest.input(cases_path);
    const Diagnostics d = diagnostics(records);
    std::ostringstream cfr;
    cfr << "age_group,month,deaths,cases,cfr\n";
    for (const auto& e : d.cfr) {
        cfr << to_string(e.age_group) << ',' << e.month << ',' << e.deaths << ',' << e.cases << ','
            << format_number(e.cfr) << '\n';
    }
    std::ostringstream asym;
    asym << "age_group,month,asymptomatic,total,ratio\n";
    for (const auto& e : d.asymptomatic) {
        asym << to_string(e.age_group) << ',' << e.month << ',' << e.asymptomatic << ',' << e.total << ','
             << format_number(e.ratio) << '\n';
    }
    manifest.output("cfr.csv", cfr.str());
    manifest.output("asymptomatic.csv", asym.str());
    manifest.note("deaths_without_onset", d.omitted_cfr_cells);
    log << records.size() << " records, " << d.cfr.size() << " CFR cells\n";
    manifest.finish(resolve_seed(global, config));
}

} // namespace

fs::path RunConfig::path(const std::string& key) const
{
    const fs::path p = values.require_string(key);
    return p.is_absolute() ? p : base_dir / p;
}

std::optional<fs::path> RunConfig::optional_path(const std::string& key) const
{
    const std::string v = values.get_string(key, "");
    if (v.empty()) {
        return std::nullopt;
    }
    const fs::path p = v;
    return p.is_absolute() ? p : base_dir / p;
}

RunConfig load_run_config(const GlobalOptions& global)
{
    RunConfig config;
    if (global.config) {
        if (!fs::exists(*global.config)) {
            throw ConfigError("config file '" + global.config->string() + "' not found");
        }
        config.values = KeyValueConfig::from_file(*global.config);
        config.base_dir = global.config->parent_path().empty() ? fs::path(".") : global.config->parent_path();
    }
    for (const auto& o : global.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("--set expects key=value, got '" + o + "'");
        }
        config.values.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    return config;
}

void cmd_simulate(const GlobalOptions& global, std::ostream& log) { cmd_simulate_impl(global, log); }
void cmd_features(const GlobalOptions& global, std::ostream& log) { cmd_features_impl(global, log); }
void cmd_fit(const GlobalOptions& global, bool reduced_form, std::ostream& log)
{
    cmd_fit_impl(global, reduced_form, log);
}
void cmd_report(const GlobalOptions& global, std::ostream& log) { cmd_report_impl(global, log); }
void cmd_diagnostics(const GlobalOptions& global, std::ostream& log) { cmd_diagnostics_impl(global, log); }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Simulation and inference for overdispersed renewal models of compartmentalized case counts",
                 "superspread"};
    app.set_version_flag("--version", version);
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions global;
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out_dir = ".";
    app.add_option("--seed", seed, "Master random seed (overrides the config's seed)");
    app.add_option("--config", config_path, "Flat key = value config file");
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--set", global.overrides, "Config override key=value (repeatable)");
    app.add_flag("--quiet", global.quiet, "Suppress progress messages");

    bool reduced = false;
    auto* simulate_cmd = app.add_subcommand("simulate", "Simulate a synthetic surveillance panel");
    auto* features_cmd = app.add_subcommand("features", "Build the estimation panel and covariates from a line list");
    auto* fit_cmd = app.add_subcommand("fit", "Fit the renewal model by MCMC");
    fit_cmd->add_flag("--reduced-form", reduced, "Estimate dispersion from weekly growth-rate variance instead");
    auto* report_cmd = app.add_subcommand("report", "Effect tables, total effects, offspring table, seasonality");
    auto* diagnostics_cmd = app.add_subcommand("diagnostics", "Case fatality and asymptomatic ratios");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ExitCode::ok : ExitCode::usage;
    }
    if (app.count("--seed")) {
        global.seed = seed;
    }
    if (!config_path.empty()) {
        global.config = config_path;
    }
    global.out = out_dir;

    std::ostream& log = err;
    try {
        if (*simulate_cmd) {
            cmd_simulate(global, log);
        }
        else if (*features_cmd) {
            cmd_features(global, log);
        }
        else if (*fit_cmd) {
            cmd_fit(global, reduced, log);
        }
        else if (*report_cmd) {
            cmd_report(global, log);
        }
        else if (*diagnostics_cmd) {
            cmd_diagnostics(global, log);
        }
    }
    catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::DataValidation: return ExitCode::data;
        case ErrorKind::Numerical: return ExitCode::numerical;
        default: return ExitCode::usage;
        }
    }
    catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
    return ExitCode::ok;
}

} // namespace superspread::cli
