#pragma once

#include "superspread/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace superspread
{

/// Comma-separated table without quoting. Blank lines are skipped.
struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based source line of each row.
    std::vector<std::size_t> lines;

    /// Throws DataValidationError when the column is absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

CsvTable parse_csv(std::istream& in, std::string_view what);
/// Throws MissingInputError when the file cannot be opened.
CsvTable read_csv_file(const std::filesystem::path& file);
/// Checks the header starts with exactly `columns`.
void require_header(const CsvTable& table, std::initializer_list<std::string_view> columns, std::string_view what);

double parse_double(std::string_view text, std::size_t line = 0);
std::int64_t parse_int64(std::string_view text, std::size_t line = 0);
std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

/// Shortest round-trip decimal; identical across runs for identical doubles.
std::string format_number(double value);

/// Flat `key = value` text; `#` starts a comment. Unknown keys are kept and can be listed.
class KeyValueConfig
{
public:
    static KeyValueConfig parse(std::istream& in);
    static KeyValueConfig from_file(const std::filesystem::path& file);

    bool has(const std::string& key) const { return m_values.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated values, trimmed; empty when absent.
    std::vector<std::string> get_list(const std::string& key) const;
    /// Keys beginning with `prefix`, in lexical order.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    void set(const std::string& key, const std::string& value) { m_values[key] = value; }
    const std::map<std::string, std::string>& values() const { return m_values; }
    /// Canonical `key=value` lines, used for digests.
    std::string canonical() const;

private:
    std::map<std::string, std::string> m_values;
};

std::string sha256_hex(std::string_view data);
/// Throws MissingInputError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& file);

/// Writes `content` to `file`, creating parent directories. Throws ConfigError when unwritable.
void write_text_file(const std::filesystem::path& file, const std::string& content);

} // namespace superspread
