#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace egoassist {

std::string base64_encode(const std::uint8_t* data, std::size_t size);
inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
  return base64_encode(data.data(), data.size());
}
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace egoassist
