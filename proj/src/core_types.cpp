#include "qtt/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qtt {

void throw_picos_range(double picoseconds) {
    throw std::range_error("picosecond value out of range: " + std::to_string(picoseconds));
}

Picos picos_from_seconds(double seconds) {
    if (!std::isfinite(seconds) || std::fabs(seconds) >= kMaxAbsSeconds) {
        throw std::range_error("seconds value out of range: " + std::to_string(seconds));
    }
    const double whole = std::trunc(seconds);
    const double frac = seconds - whole;  // exact
    return Picos{static_cast<std::int64_t>(whole) * kPicosPerSecond + std::llround(frac * 1e12)};
}

double seconds_from_picos(Picos t) {
    // Split to keep full precision for large counts.
    const std::int64_t whole = t.count / kPicosPerSecond;
    const std::int64_t frac = t.count % kPicosPerSecond;
    return static_cast<double>(whole) + static_cast<double>(frac) * 1e-12;
}

std::string_view channel_name(Channel ch) {
    switch (ch) {
        case Channel::AliceLocal: return "AliceLocal";
        case Channel::AliceReceive: return "AliceReceive";
        case Channel::BobLocal: return "BobLocal";
        case Channel::BobReceive: return "BobReceive";
    }
    return "Unknown";
}

Channel channel_from_name(std::string_view name) {
    for (Channel ch : kAllChannels) {
        if (channel_name(ch) == name) return ch;
    }
    throw std::invalid_argument("unknown channel name: " + std::string(name));
}

bool is_strictly_increasing(const std::vector<Picos>& tags) {
    return std::adjacent_find(tags.begin(), tags.end(), [](Picos a, Picos b) { return !(a < b); }) == tags.end();
}

std::vector<Picos> slice_tags(const std::vector<Picos>& tags, Picos begin, Picos end) {
    auto lo = std::lower_bound(tags.begin(), tags.end(), begin);
    auto hi = std::lower_bound(lo, tags.end(), end);
    return {lo, hi};
}

}  // namespace qtt
