#include "superspread/common.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace superspread
{

namespace
{

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::array<std::string_view, age_group_count> age_labels{"0-4", "5-14", "15-34", "35-59", "60-79", "80+"};

int parse_int(std::string_view text, std::string_view whole)
{
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataValidationError("invalid date '" + std::string(whole) + "'");
    }
    return value;
}

} // namespace

Rng derive_stream(std::uint64_t master_seed, std::uint64_t unit_index)
{
    std::uint64_t s = splitmix64(master_seed ^ unit_index);
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return Rng(seq);
}

Day parse_date(std::string_view text)
{
    using namespace std::chrono;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw DataValidationError("invalid date '" + std::string(text) + "'");
    }
    year_month_day ymd{year{parse_int(text.substr(0, 4), text)},
                       month{static_cast<unsigned>(parse_int(text.substr(5, 2), text))},
                       day{static_cast<unsigned>(parse_int(text.substr(8, 2), text))}};
    if (!ymd.ok()) {
        throw DataValidationError("invalid date '" + std::string(text) + "'");
    }
    return sys_days{ymd};
}

std::string format_date(Day day)
{
    std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_month(Day day)
{
    return format_date(day).substr(0, 7);
}

unsigned iso_weekday(Day day)
{
    return std::chrono::weekday{day}.iso_encoding();
}

std::string_view to_string(AgeGroup age)
{
    return age_labels[static_cast<std::size_t>(age)];
}

AgeGroup parse_age_group(std::string_view text)
{
    for (std::size_t i = 0; i < age_labels.size(); ++i) {
        if (age_labels[i] == text) {
            return static_cast<AgeGroup>(i);
        }
    }
    throw DataValidationError("unknown age bracket '" + std::string(text) + "'");
}

std::vector<AgeGroup> main_age_groups()
{
    return {AgeGroup::A15_34, AgeGroup::A35_59, AgeGroup::A60_79, AgeGroup::A80_plus};
}

std::string to_string(const CompartmentKey& key)
{
    return key.location + ":" + std::string(to_string(key.age_group));
}

} // namespace superspread
