#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>

#include "csas/error.hpp"

namespace csas {

// Stable identifier of one question-bank item.
struct ItemId {
    std::int64_t value = 0;

    friend constexpr auto operator<=>(const ItemId&, const ItemId&) = default;
};

inline std::string to_string(ItemId id) { return std::to_string(id.value); }

// Closed rating interval, e.g. a 1-4 accuracy scale.
struct Scale {
    double min = 1.0;
    double max = 4.0;

    constexpr double midpoint() const noexcept { return (min + max) / 2.0; }
    constexpr bool contains(double rating) const noexcept {
        return rating >= min && rating <= max;
    }

    void validate() const {
        if (!std::isfinite(min) || !std::isfinite(max) || !(min < max)) {
            throw ConfigError("scale bounds must be finite with scale_min < scale_max");
        }
    }

    friend constexpr bool operator==(const Scale&, const Scale&) = default;
};

}  // namespace csas

template <>
struct std::hash<csas::ItemId> {
    std::size_t operator()(const csas::ItemId& id) const noexcept {
        return std::hash<std::int64_t>{}(id.value);
    }
};
