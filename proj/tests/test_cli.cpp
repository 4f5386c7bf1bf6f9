#include "superspread/cli.hpp"
#include "superspread/io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace superspread;

namespace
{

struct Result
{
    int code = 0;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args)
{
    args.insert(args.begin(), "superspread");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("superspread_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& file, const std::string& text)
{
    std::ofstream(file) << text;
}

std::string slurp(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CsvTable table(const fs::path& file)
{
    std::ifstream in(file);
    return parse_csv(in, file.filename().string());
}

} // namespace

TEST_CASE("cli usage errors")
{
    CHECK(run({}).code == 2);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"--version"}).code == 0);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"simulate", "--no-such-flag"}).code == 2);
    const fs::path dir = scratch("usage");
    CHECK(run({"--config", (dir / "absent.cfg").string(), "--out", dir.string(), "simulate"}).code == 2);
    write(dir / "bad.cfg", "horizon = many\n");
    CHECK(run({"--config", (dir / "bad.cfg").string(), "--out", dir.string(), "simulate"}).code == 2);
}

TEST_CASE("simulate with horizon 0 writes a header-only case file")
{
    const fs::path dir = scratch("empty");
    const Result r = run({"--seed", "1", "--out", dir.string(), "--set", "horizon=0", "--quiet", "simulate"});
    REQUIRE(r.code == 0);
    CHECK(slurp(dir / "cases.csv") == "onset_date,report_date,age_group,location,died\n");
    CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("simulate is deterministic under a fixed seed")
{
    const fs::path a = scratch("det_a");
    const fs::path b = scratch("det_b");
    const fs::path c = scratch("det_c");
    const std::vector<std::string> common = {"--set", "horizon=40", "--set", "n_locations=2", "--quiet"};
    auto with = [&](const std::string& seed, const fs::path& out) {
        std::vector<std::string> args = {"--seed", seed, "--out", out.string()};
        args.insert(args.end(), common.begin(), common.end());
        args.push_back("simulate");
        return run(args).code;
    };
    REQUIRE(with("7", a) == 0);
    REQUIRE(with("7", b) == 0);
    REQUIRE(with("8", c) == 0);
    for (const char* f : {"cases.csv", "latent.csv", "weather.csv", "covariates.csv", "truth.csv"}) {
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(slurp(a / "cases.csv") != slurp(c / "cases.csv"));
    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["outputs"].contains("cases.csv"));
}

TEST_CASE("fit, report and diagnostics error paths")
{
    const fs::path dir = scratch("pipeline");
    REQUIRE(run({"--seed", "2", "--out", (dir / "sim").string(), "--set", "horizon=40", "--set", "n_locations=3",
                 "--set", "init_mean=30", "--quiet", "simulate"})
                .code == 0);
    write(dir / "features.cfg", "cases = sim/cases.csv\npopulation = sim/population.csv\n"
                                "interventions = sim/interventions.csv\nweather = sim/weather.csv\n"
                                "start_date = 2020-03-01\nn_days = 40\n");
    REQUIRE(run({"--config", (dir / "features.cfg").string(), "--out", (dir / "feat").string(), "--quiet", "features"})
                .code == 0);

    write(dir / "fit.cfg", "panel = feat/panel.csv\ncovariates = feat/covariates.csv\nchains = 2\nburn_in = 50\n"
                           "iterations = 50\n");
    REQUIRE(run({"--seed", "4", "--config", (dir / "fit.cfg").string(), "--out", (dir / "fit").string(), "--quiet",
                 "fit"})
                .code == 0);
    const std::string summary = slurp(dir / "fit" / "summary.csv");
    CHECK(summary.rfind("parameter,mean,sd,q2.5,q97.5,rhat\n", 0) == 0);

    REQUIRE(run({"--seed", "4", "--config", (dir / "fit.cfg").string(), "--out", (dir / "rf").string(), "--quiet",
                 "fit", "--reduced-form"})
                .code == 0);
    CHECK(fs::exists(dir / "rf" / "reduced_form.csv"));

    // missing covariate file vs malformed panel
    write(dir / "missing.cfg", "panel = feat/panel.csv\ncovariates = feat/nothing.csv\n");
    const Result missing =
        run({"--config", (dir / "missing.cfg").string(), "--out", (dir / "x").string(), "--quiet", "fit"});
    write(dir / "broken_panel.csv", "location,age_group,population,date,cases\nloc01,15-34,1e5,2020-03-01,-4\n");
    write(dir / "broken.cfg", "panel = broken_panel.csv\ncovariates = feat/covariates.csv\n");
    const Result broken = run({"--config", (dir / "broken.cfg").string(), "--out", (dir / "x").string(), "--quiet", "fit"});
    CHECK(missing.code == 2);
    CHECK(broken.code == 3);
    CHECK(missing.code != broken.code);

    // report with draws whose covariates differ from the panel
    write(dir / "report.cfg", "fit_dir = fit\npanel = feat/panel.csv\ncovariates = feat/covariates.csv\n"
                              "weather = sim/weather.csv\n");
    REQUIRE(run({"--config", (dir / "report.cfg").string(), "--out", (dir / "rep").string(), "--quiet", "report"})
                .code == 0);
    const std::string seasonal = slurp(dir / "rep" / "seasonal.csv");
    CHECK(std::count(seasonal.begin(), seasonal.end(), '\n') == 366);

    write(dir / "mismatch.cfg", "fit_dir = fit\npanel = feat/panel.csv\ncovariates = feat/covariates.csv\n"
                                "use_covariates = lockdown, traced_ratio\n");
    const Result mismatch =
        run({"--config", (dir / "mismatch.cfg").string(), "--out", (dir / "y").string(), "--quiet", "report"});
    CHECK(mismatch.code == 3);
    CHECK(mismatch.err.find("temperature") != std::string::npos);
    CHECK(mismatch.err.find("only in draws") != std::string::npos);

    write(dir / "diag.cfg", "cases = sim/cases.csv\n");
    REQUIRE(run({"--config", (dir / "diag.cfg").string(), "--out", (dir / "diag").string(), "--quiet", "diagnostics"})
                .code == 0);
    CHECK(fs::exists(dir / "diag" / "cfr.csv"));
}

TEST_CASE("report with zero effects")
{
    const fs::path dir = scratch("zero");
    REQUIRE(run({"--seed", "3", "--out", (dir / "sim").string(), "--set", "horizon=30", "--set", "n_locations=3",
                 "--set", "init_mean=30", "--quiet", "simulate"})
                .code == 0);
    write(dir / "features.cfg", "cases = sim/cases.csv\npopulation = sim/population.csv\n"
                                "interventions = sim/interventions.csv\nstart_date = 2020-03-01\nn_days = 30\n"
                                "weekday = false\nincidence = false\ncumulative_incidence = false\n");
    REQUIRE(run({"--config", (dir / "features.cfg").string(), "--out", (dir / "feat").string(), "--quiet", "features"})
                .code == 0);
    write(dir / "fit.cfg", "panel = feat/panel.csv\ncovariates = feat/covariates.csv\nchains = 2\nburn_in = 20\n"
                           "iterations = 20\n");
    REQUIRE(run({"--config", (dir / "fit.cfg").string(), "--out", (dir / "fit").string(), "--quiet", "fit"}).code == 0);

    // zero every beta draw
    for (const char* name : {"draws_chain1.csv", "draws_chain2.csv"}) {
        std::istringstream in(slurp(dir / "fit" / name));
        std::ostringstream out;
        std::string line;
        while (std::getline(in, line)) {
            const auto first = line.find(',');
            const auto last = line.rfind(',');
            if (line.compare(first + 1, 5, "beta[") == 0) {
                line = line.substr(0, last + 1) + "0";
            }
            out << line << "\n";
        }
        write(dir / "fit" / name, out.str());
    }
    write(dir / "report.cfg", "fit_dir = fit\npanel = feat/panel.csv\ncovariates = feat/covariates.csv\n");
    REQUIRE(run({"--config", (dir / "report.cfg").string(), "--out", (dir / "rep").string(), "--quiet", "report"})
                .code == 0);
    const CsvTable effects = table(dir / "rep" / "effects.csv");
    REQUIRE_FALSE(effects.rows.empty());
    for (const auto& row : effects.rows) {
        CHECK(std::stod(row[2]) == 0.0);
    }
    const CsvTable totals = table(dir / "rep" / "total_effects.csv");
    REQUIRE_FALSE(totals.rows.empty());
    for (const auto& row : totals.rows) {
        CHECK(std::stod(row[2]) == 1.0);
    }
}
