#include "superspread/features.hpp"
#include "superspread/renewal.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace superspread;

namespace
{

const std::filesystem::path fixtures = FIXTURE_DIR;

Day day(const char* text) { return parse_date(text); }

CaseRecord record(const char* onset, const char* report, const char* location = "north")
{
    CaseRecord r;
    if (onset) {
        r.onset = day(onset);
    }
    r.report = day(report);
    r.location = location;
    return r;
}

std::size_t error_line(const std::string& csv)
{
    std::istringstream in(csv);
    try {
        parse_cases(in);
    }
    catch (const DataValidationError& e) {
        return e.line;
    }
    return 0;
}

} // namespace

TEST_CASE("load_cases")
{
    const auto records = load_cases(fixtures / "cases_10.csv");
    CHECK(records.size() == 10);
    CHECK(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.asymptomatic(); }) == 3);
    CHECK(records[3].died);
    CHECK(records[4].age_group == AgeGroup::A80_plus);

    std::istringstream header_only("onset_date,report_date,age_group,location,died\n");
    CHECK(parse_cases(header_only).empty());

    const std::string head = "onset_date,report_date,age_group,location,died\n";
    CHECK(error_line(head + "2020-03-05,2020-03-04,15-34,x,0\n") == 2);
    CHECK(error_line(head + "2020-03-01,2020-03-04,15-34,x,0\n2020-03-01,2020-03-04,20-30,x,0\n") == 3);
    CHECK(error_line(head + "2020-03-01,2020-03-04,15-34,x\n") == 2);
    CHECK(error_line(head + "2020-13-01,2020-03-04,15-34,x,0\n") == 2);
    CHECK_THROWS_AS(load_cases(fixtures / "missing.csv"), MissingInputError);
}

TEST_CASE("traced_ratio")
{
    // reported before the infectious window opens
    const std::vector<CaseRecord> early = {record("2020-03-10", "2020-03-05"), record("2020-03-09", "2020-03-04")};
    CHECK(traced_ratio(early, "north", day("2020-03-09")).value == 1.0);

    const TracedRatio none = traced_ratio(early, "north", day("2020-04-01"));
    CHECK(none.value == 0.0);
    CHECK(none.sparse);

    // 4 infectious on 2020-03-10 (onset 03-04 .. 03-11), 1 of them reported by then; 2 others outside the window
    const std::vector<CaseRecord> fixture = {
        record("2020-03-04", "2020-03-08"), record("2020-03-08", "2020-03-12"), record("2020-03-10", "2020-03-11"),
        record("2020-03-11", "2020-03-13"), record("2020-03-03", "2020-03-04"), record("2020-03-12", "2020-03-12"),
        record("2020-03-09", "2020-03-09", "south")};
    const TracedRatio tr = traced_ratio(fixture, "north", day("2020-03-10"));
    CHECK(tr.infectious == 4);
    CHECK(tr.reported == 1);
    CHECK(tr.value == 0.25);

    // adding earlier report dates never lowers the ratio
    std::vector<CaseRecord> sooner = fixture;
    sooner[1].report = day("2020-03-09");
    CHECK(traced_ratio(sooner, "north", day("2020-03-10")).value >= tr.value);
}

TEST_CASE("incidence_information")
{
    CountMatrix counts = CountMatrix::Zero(1, 14);
    const Eigen::VectorXd pop = Eigen::VectorXd::Constant(1, 100000);
    CHECK(incidence_information(counts, pop, 10)(0) == 0.0);

    counts.row(0).segment(3, 7).setConstant(0);
    counts(0, 3) = 50;
    counts(0, 9) = 49;
    CHECK(incidence_information(counts, pop, 10)(0) == doctest::Approx(2.0).epsilon(1e-15));
    // day 10 uses days 3..9; day 11 drops day 3
    CHECK(incidence_information(counts, pop, 11)(0) == doctest::Approx(std::log10(50.0)).epsilon(1e-15));
    // cases on the day itself take effect only the following day
    CHECK(incidence_information(counts, pop, 9)(0) == doctest::Approx(std::log10(51.0)).epsilon(1e-15));

    counts.setZero();
    counts(0, 5) = 160;
    CHECK(incidence_information(counts, pop, 8)(0) == doctest::Approx(2.2068258760).epsilon(1e-9));

    // population scaling invariance and monotonicity
    CountMatrix scaled = counts * 3;
    CHECK(incidence_information(scaled, pop * 3, 8)(0) == doctest::Approx(incidence_information(counts, pop, 8)(0)));
    counts(0, 6) = 1;
    CHECK(incidence_information(counts, pop, 8)(0) > 2.2068258760);
    CHECK_THROWS_AS(incidence_information(counts, Eigen::VectorXd::Zero(1), 8), DataValidationError);
}

TEST_CASE("cumulative_incidence")
{
    CountMatrix counts = CountMatrix::Zero(1, 40);
    const Eigen::VectorXd pop = Eigen::VectorXd::Constant(1, 100000);
    CHECK(cumulative_incidence(counts, pop, 30)(0) == 0.0);
    counts(0, 5) = 1000;
    counts(0, 10) = 200;
    counts(0, 20) = 77;
    CHECK(cumulative_incidence(counts, pop, 13)(0) == 0.0);
    CHECK(cumulative_incidence(counts, pop, 19)(0) == doctest::Approx(1.0));
    CHECK(cumulative_incidence(counts, pop, 24)(0) == doctest::Approx(1.2));
    CHECK(cumulative_incidence(counts, pop, 33)(0) == doctest::Approx(1.2));
    CHECK(cumulative_incidence(counts, pop, 34)(0) == doctest::Approx(1.277));
    CHECK(cumulative_incidence(counts, pop, 34, 0)(0) == doctest::Approx(1.277));
}

TEST_CASE("weekly_growth_rates")
{
    CountMatrix constant = CountMatrix::Constant(1, 21, 5);
    for (const auto& g : weekly_growth_rates(constant)) {
        CHECK(g.rate == 1.0);
        CHECK(g.prior_count == 35);
    }

    CountMatrix jump = CountMatrix::Zero(1, 14);
    jump(0, 0) = 100;
    jump(0, 13) = 250;
    const auto j = weekly_growth_rates(jump);
    REQUIRE(j.size() == 1);
    CHECK(j[0].rate == 2.5);
    CHECK(j[0].week == 1);

    // exponential series i_t = 3 * 2^(t/7)^... with weekly doubling of window-aligned sums
    CountMatrix doubling(1, 35);
    for (int t = 0; t < 35; ++t) {
        doubling(0, t) = 3 * (std::int64_t{1} << (t / 7)) * (1 + t % 7);
    }
    const auto d = weekly_growth_rates(doubling);
    REQUIRE(d.size() == 4);
    for (const auto& g : d) {
        CHECK(std::abs(g.rate - 2.0) < 1e-12);
    }

    // i_t = i_0 q^t gives the weekly factor q^7 on window-aligned weeks
    CountMatrix geometric(1, 28);
    for (int t = 0; t < 28; ++t) {
        geometric(0, t) = std::int64_t{1} << t;
    }
    for (const auto& g : weekly_growth_rates(geometric)) {
        CHECK(std::abs(g.rate - 128.0) < 1e-12);
    }

    CountMatrix empty = CountMatrix::Zero(1, 14);
    const auto e = weekly_growth_rates(empty);
    CHECK_FALSE(e[0].defined);
    CHECK(weekly_growth_rates(CountMatrix::Zero(2, 13)).size() == 0);
}

TEST_CASE("diagnostics")
{
    std::vector<CaseRecord> records;
    for (int i = 0; i < 50; ++i) {
        CaseRecord r = record("2020-04-03", "2020-04-06");
        r.age_group = AgeGroup::A80_plus;
        r.died = i < 2;
        records.push_back(r);
    }
    CaseRecord asym = record(nullptr, "2020-04-08");
    asym.age_group = AgeGroup::A80_plus;
    asym.died = true;
    records.push_back(asym);
    const Diagnostics d = diagnostics(records);
    REQUIRE(d.cfr.size() == 1);
    CHECK(d.cfr[0].cfr == doctest::Approx(0.04));
    CHECK(d.cfr[0].month == "2020-04");
    REQUIRE(d.asymptomatic.size() == 1);
    CHECK(d.asymptomatic[0].asymptomatic == 1);
    CHECK(d.asymptomatic[0].total == 51);
    CHECK(d.omitted_cfr_cells == 1);

    const Diagnostics fixture = diagnostics(load_cases(fixtures / "cases_10.csv"));
    for (const auto& e : fixture.cfr) {
        if (e.age_group == AgeGroup::A15_34) {
            CHECK(e.cfr == 0.0);
        }
    }
}

TEST_CASE("simulate round-trips through the case file")
{
    std::vector<CompartmentKey> keys = {{"L1", AgeGroup::A15_34}, {"L1", AgeGroup::A60_79}, {"L2", AgeGroup::A80_plus}};
    ModelParams p = make_params(keys, {});
    p.effects.r0.setConstant(1.8);
    p.dispersion.setConstant(0.7);
    p.init_mean = 20;
    CovariatePanel cov;
    cov.start = day("2020-03-01");
    cov.n_days = 40;
    cov.locations = {"L1", "L2"};
    cov.values.assign(2, Eigen::MatrixXd(40, 0));
    const SimulatedPanel sim = simulate(p, cov, 40, TransmissionVariant::PerIndividual, 4);

    std::vector<CaseRecord> records;
    for (std::size_t c = 0; c < keys.size(); ++c) {
        for (int t = 0; t < 40; ++t) {
            for (std::int64_t n = 0; n < sim.sampled_cases(static_cast<Index>(c), t); ++n) {
                CaseRecord r;
                r.onset = cov.start + t;
                r.report = cov.start + t + static_cast<int>(n % 4);
                r.location = keys[c].location;
                r.age_group = keys[c].age_group;
                records.push_back(r);
            }
        }
    }
    std::stringstream file;
    write_cases(file, records);
    const auto loaded = parse_cases(file);
    CHECK(onset_counts(loaded, keys, cov.start, 40) == sim.sampled_cases);
}

TEST_CASE("build_panel")
{
    const auto records = load_cases(fixtures / "cases_10.csv");
    PopulationTable pop;
    for (const char* loc : {"north", "south"}) {
        for (AgeGroup a : main_age_groups()) {
            pop.by_compartment[{loc, a}] = 25000;
        }
    }
    FeatureSpec spec;
    spec.start = day("2020-03-02");
    spec.n_days = 10;
    spec.standardize = {};
    const std::vector<InterventionSpan> spans = {{"north", "lockdown", day("2020-03-05"), day("2020-03-07")}};
    std::vector<WeatherRecord> weather;
    for (const char* loc : {"north", "south"}) {
        for (int d = 0; d < 10; ++d) {
            weather.push_back({loc, spec.start + d, 5.0 + d, 70.0});
        }
    }
    const Panel panel = build_panel(spec, records, pop, &weather, spans, nullptr);
    CHECK(panel.compartments.size() == 8);
    CHECK(panel.cases.sum() == 7);
    const std::vector<std::string> expected = {"lockdown",   "weekday_2",     "weekday_3",   "weekday_4",
                                               "weekday_5",  "weekday_6",     "weekday_7",   "traced_ratio",
                                               "incidence_log", "cumulative_incidence", "temperature", "humidity"};
    CHECK(panel.covariates.names == expected);
    const auto& north = panel.covariates.values[static_cast<std::size_t>(panel.covariates.location_index("north"))];
    // lockdown active 03-05..03-07 inclusive
    CHECK(north.col(0).sum() == 3.0);
    CHECK(north(3, 0) == 1.0);
    CHECK(north(6, 0) == 0.0);
    // 2020-03-02 is a Monday
    CHECK(north.row(0).segment(1, 6).sum() == 0.0);
    CHECK(north(1, 1) == 1.0);
    // traced ratio on 03-04 in north: onsets 03-02, 03-03, 03-04 infectious, 03-02 not yet reported
    CHECK(north(2, 7) == doctest::Approx(1.0 / 3.0));
    // incidence on 03-05: reports 03-04 (two records, one asymptomatic) over 100000
    CHECK(north(3, 8) == doctest::Approx(std::log10(1 + 2.0)));
    CHECK(north(9, 10) == 14.0);

    std::vector<WeatherRecord> gappy(weather.begin() + 1, weather.end());
    CHECK_THROWS_AS(build_panel(spec, records, pop, &gappy, spans, nullptr), DataValidationError);
}

TEST_CASE("panel and covariate files round-trip")
{
    const auto records = load_cases(fixtures / "cases_10.csv");
    PopulationTable pop;
    for (const char* loc : {"north", "south"}) {
        for (AgeGroup a : main_age_groups()) {
            pop.by_compartment[{loc, a}] = 30000;
        }
    }
    FeatureSpec spec;
    spec.start = day("2020-03-02");
    spec.n_days = 12;
    spec.weekday = false;
    const Panel panel = build_panel(spec, records, pop, nullptr, {}, nullptr);
    std::stringstream values, meta, cases;
    write_covariates(values, meta, panel.covariates);
    write_panel(cases, panel);
    const std::string values_text = values.str();
    const std::string meta_text = meta.str();
    CovariatePanel cov = parse_covariates(values, &meta);
    CHECK(cov.names == panel.covariates.names);
    CHECK(cov.kinds == panel.covariates.kinds);
    for (std::size_t l = 0; l < cov.values.size(); ++l) {
        CHECK(cov.values[l] == panel.covariates.values[l]);
    }
    const Panel back = parse_panel(cases, cov);
    CHECK(back.cases == panel.cases);
    CHECK(back.populations == panel.populations);
    CHECK(back.compartments == panel.compartments);

    std::stringstream values2, meta2;
    write_covariates(values2, meta2, back.covariates);
    CHECK(values2.str() == values_text);
    CHECK(meta2.str() == meta_text);

    std::stringstream broken("location,age_group,population,date,cases\nnorth,15-34,30000,2020-03-02,4\n"
                             "north,15-34,30000,2020-03-04,1\n");
    CHECK_THROWS_AS(parse_panel(broken, cov), DataValidationError);
}
