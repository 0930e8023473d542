#pragma once

#include <string_view>

namespace csas {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace csas
