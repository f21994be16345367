#pragma once

#include <compare>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace qtt {

// Picosecond timestamp / duration. Timestamp arithmetic is exact integer arithmetic.
struct Picos {
    std::int64_t count = 0;

    constexpr Picos() = default;
    constexpr explicit Picos(std::int64_t ps) : count(ps) {}

    constexpr auto operator<=>(const Picos&) const = default;

    constexpr Picos operator-() const { return Picos{-count}; }
    constexpr Picos& operator+=(Picos o) { count += o.count; return *this; }
    constexpr Picos& operator-=(Picos o) { count -= o.count; return *this; }
    friend constexpr Picos operator+(Picos a, Picos b) { return Picos{a.count + b.count}; }
    friend constexpr Picos operator-(Picos a, Picos b) { return Picos{a.count - b.count}; }
};

inline constexpr std::int64_t kPicosPerSecond = 1'000'000'000'000;
inline constexpr double kMaxAbsSeconds = 1.0e6;

// Nearest-integer rounding, ties away from zero. Throws std::range_error when |s| >= 1e6 s.
Picos picos_from_seconds(double seconds);
double seconds_from_picos(Picos t);

[[noreturn]] void throw_picos_range(double picoseconds);

// Same rounding rule for a real-valued picosecond quantity.
inline Picos round_picos(double picoseconds) {
    if (!(std::fabs(picoseconds) < kMaxAbsSeconds * 1e12)) throw_picos_range(picoseconds);
    double whole = std::trunc(picoseconds);
    const double frac = picoseconds - whole;  // exact
    if (frac >= 0.5) {
        whole += 1.0;
    } else if (frac <= -0.5) {
        whole -= 1.0;
    }
    return Picos{static_cast<std::int64_t>(whole)};
}

enum class Channel : std::uint8_t {
    AliceLocal = 0,
    AliceReceive = 1,
    BobLocal = 2,
    BobReceive = 3,
};

inline constexpr Channel kAllChannels[] = {Channel::AliceLocal, Channel::AliceReceive, Channel::BobLocal,
                                           Channel::BobReceive};

std::string_view channel_name(Channel ch);
// Throws std::invalid_argument on an unknown name.
Channel channel_from_name(std::string_view name);

struct TagStream {
    Channel channel = Channel::AliceLocal;
    std::vector<Picos> tags;  // strictly increasing

    std::size_t size() const { return tags.size(); }
    bool empty() const { return tags.empty(); }
};

bool is_strictly_increasing(const std::vector<Picos>& tags);

// Sub-range [begin, end) of a sorted tag list.
std::vector<Picos> slice_tags(const std::vector<Picos>& tags, Picos begin, Picos end);

struct PhysicalConstants {
    double c = 299'792'458.0;                                    // m/s
    double gm = 3.986004418e14;                                  // m^3/s^2
    double earth_radius = 6'371'000.0;                           // m
    double earth_rotation = 2.0 * std::numbers::pi / 86164.0905;  // rad/s
    double precession = 2.0 * std::numbers::pi / (365.2422 * 86400.0);  // rad/s, sun-synchronous
};

}  // namespace qtt
