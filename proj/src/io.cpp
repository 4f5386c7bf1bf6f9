#include "superspread/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace superspread
{

std::string trim(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view text, char sep)
{
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (true) {
        const auto pos = text.find(sep, begin);
        out.push_back(trim(text.substr(begin, pos == std::string_view::npos ? pos : pos - begin)));
        if (pos == std::string_view::npos) {
            break;
        }
        begin = pos + 1;
    }
    return out;
}

std::size_t CsvTable::column(std::string_view name) const
{
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw DataValidationError("missing column '" + std::string(name) + "'", 1);
    }
    return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(std::string_view name) const
{
    return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable parse_csv(std::istream& in, std::string_view what)
{
    CsvTable table;
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (number == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split(line, ',');
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw DataValidationError(std::string(what) + ": expected " + std::to_string(table.header.size()) +
                                          " fields, found " + std::to_string(fields.size()),
                                      number);
        }
        table.rows.push_back(std::move(fields));
        table.lines.push_back(number);
    }
    if (!have_header) {
        throw DataValidationError(std::string(what) + ": missing header", 1);
    }
    return table;
}

CsvTable read_csv_file(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) {
        throw MissingInputError("cannot open '" + file.string() + "'");
    }
    return parse_csv(in, file.filename().string());
}

void require_header(const CsvTable& table, std::initializer_list<std::string_view> columns, std::string_view what)
{
    std::size_t i = 0;
    for (auto name : columns) {
        if (i >= table.header.size() || table.header[i] != name) {
            std::string expected;
            for (auto c : columns) {
                expected += (expected.empty() ? "" : ",") + std::string(c);
            }
            throw DataValidationError(std::string(what) + ": header must be '" + expected + "'", 1);
        }
        ++i;
    }
}

double parse_double(std::string_view text, std::size_t line)
{
    const std::string s = trim(text);
    if (s.empty()) {
        throw DataValidationError("empty numeric field", line);
    }
    char* end = nullptr;
    const double value = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) {
        throw DataValidationError("invalid number '" + s + "'", line);
    }
    return value;
}

std::int64_t parse_int64(std::string_view text, std::size_t line)
{
    const std::string s = trim(text);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataValidationError("invalid integer '" + s + "'", line);
    }
    return value;
}

std::string format_number(double value)
{
    if (std::isnan(value)) {
        return "NA";
    }
    if (std::isinf(value)) {
        return value > 0 ? "Inf" : "-Inf";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

KeyValueConfig KeyValueConfig::parse(std::istream& in)
{
    KeyValueConfig config;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(number) + ": empty key");
        }
        config.m_values[key] = trim(std::string_view(line).substr(eq + 1));
    }
    return config;
}

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open config '" + file.string() + "'");
    }
    return parse(in);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    auto it = m_values.find(key);
    return it == m_values.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const
{
    auto it = m_values.find(key);
    if (it == m_values.end() || it->second.empty()) {
        throw ConfigError("missing config key '" + key + "'");
    }
    return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    auto it = m_values.find(key);
    if (it == m_values.end()) {
        return fallback;
    }
    try {
        return parse_double(it->second);
    }
    catch (const DataValidationError&) {
        throw ConfigError("config key '" + key + "' is not a number");
    }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const
{
    auto it = m_values.find(key);
    if (it == m_values.end()) {
        return fallback;
    }
    try {
        return static_cast<int>(parse_int64(it->second));
    }
    catch (const DataValidationError&) {
        throw ConfigError("config key '" + key + "' is not an integer");
    }
}

std::uint64_t KeyValueConfig::get_uint64(const std::string& key, std::uint64_t fallback) const
{
    auto it = m_values.find(key);
    if (it == m_values.end()) {
        return fallback;
    }
    std::uint64_t value = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "' is not an unsigned integer");
    }
    return value;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    auto it = m_values.find(key);
    if (it == m_values.end()) {
        return fallback;
    }
    const auto& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError("config key '" + key + "' is not a boolean");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const
{
    auto it = m_values.find(key);
    if (it == m_values.end() || trim(it->second).empty()) {
        return {};
    }
    return split(it->second, ',');
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const
{
    std::vector<std::string> out;
    for (auto it = m_values.lower_bound(prefix); it != m_values.end() && it->first.starts_with(prefix); ++it) {
        out.push_back(it->first);
    }
    return out;
}

std::string KeyValueConfig::canonical() const
{
    std::string out;
    for (const auto& [k, v] : m_values) {
        out += k + "=" + v + "\n";
    }
    return out;
}

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("sha256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw MissingInputError("cannot read '" + file.string() + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return sha256_hex(buffer.str());
}

void write_text_file(const std::filesystem::path& file, const std::string& content)
{
    std::error_code ec;
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path(), ec);
    }
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write '" + file.string() + "'");
    }
    out << content;
    if (!out) {
        throw ConfigError("failed writing '" + file.string() + "'");
    }
}

} // namespace superspread
