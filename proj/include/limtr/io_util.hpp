#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace limtr {

std::string base64_encode(const uint8_t* data, size_t len);
std::vector<uint8_t> base64_decode(const std::string& text);

std::string encode_f32_base64(const std::vector<float>& values);
std::vector<float> decode_f32_base64(const std::string& text);

}  // namespace limtr
