#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vbd {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace vbd
