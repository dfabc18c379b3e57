#pragma once

#include <cstdint>
#include <string_view>

namespace incsim {

enum class Sex : std::uint8_t { female = 0, male = 1 };

using AgentId = std::int32_t;
inline constexpr AgentId kNoAgent = -1;

inline constexpr std::string_view to_string(Sex sex) noexcept {
    return sex == Sex::female ? "female" : "male";
}

} // namespace incsim
