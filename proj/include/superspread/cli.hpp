#pragma once

#include "superspread/io.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace superspread::cli
{

inline constexpr const char* version = "0.3.0";

enum ExitCode : int
{
    ok = 0,
    usage = 2,
    data = 3,
    numerical = 4,
};

struct GlobalOptions
{
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out = ".";
    /// `key=value` overrides applied on top of the config file.
    std::vector<std::string> overrides;
    bool quiet = false;
};

/// Config file plus overrides. Relative paths inside it resolve against `base_dir`.
struct RunConfig
{
    KeyValueConfig values;
    std::filesystem::path base_dir = ".";

    std::filesystem::path path(const std::string& key) const;
    std::optional<std::filesystem::path> optional_path(const std::string& key) const;
};

RunConfig load_run_config(const GlobalOptions& global);

/// Each command writes into global.out and finishes with manifest.json. Errors propagate as exceptions.
void cmd_simulate(const GlobalOptions& global, std::ostream& log);
void cmd_features(const GlobalOptions& global, std::ostream& log);
void cmd_fit(const GlobalOptions& global, bool reduced_form, std::ostream& log);
void cmd_report(const GlobalOptions& global, std::ostream& log);
void cmd_diagnostics(const GlobalOptions& global, std::ostream& log);

/// Parses arguments, runs the subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace superspread::cli
