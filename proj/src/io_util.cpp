#include "limtr/io_util.hpp"

#include <cstring>
#include <stdexcept>

namespace limtr {

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const uint8_t* data, size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        uint32_t v = static_cast<uint32_t>(data[i]) << 16;
        if (i + 1 < len) v |= static_cast<uint32_t>(data[i + 1]) << 8;
        if (i + 2 < len) v |= static_cast<uint32_t>(data[i + 2]);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < len ? kAlphabet[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? kAlphabet[v & 63] : '=');
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw std::invalid_argument("base64: length not multiple of 4");
    std::vector<uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        int vals[4] = {0, 0, 0, 0};
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + static_cast<size_t>(j)];
            if (c == '=') {
                ++pad;
                continue;
            }
            if (pad > 0) throw std::invalid_argument("base64: data after padding");
            vals[j] = decode_char(c);
            if (vals[j] < 0) throw std::invalid_argument("base64: invalid character");
        }
        const uint32_t v = (static_cast<uint32_t>(vals[0]) << 18) |
                           (static_cast<uint32_t>(vals[1]) << 12) |
                           (static_cast<uint32_t>(vals[2]) << 6) | static_cast<uint32_t>(vals[3]);
        out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<uint8_t>(v & 0xff));
    }
    return out;
}

std::string encode_f32_base64(const std::vector<float>& values) {
    std::vector<uint8_t> bytes(values.size() * 4);
    for (size_t i = 0; i < values.size(); ++i) {
        uint32_t bits;
        std::memcpy(&bits, &values[i], 4);
        bytes[i * 4] = static_cast<uint8_t>(bits & 0xff);
        bytes[i * 4 + 1] = static_cast<uint8_t>((bits >> 8) & 0xff);
        bytes[i * 4 + 2] = static_cast<uint8_t>((bits >> 16) & 0xff);
        bytes[i * 4 + 3] = static_cast<uint8_t>((bits >> 24) & 0xff);
    }
    return base64_encode(bytes.data(), bytes.size());
}

std::vector<float> decode_f32_base64(const std::string& text) {
    const std::vector<uint8_t> bytes = base64_decode(text);
    if (bytes.size() % 4 != 0)
        throw std::invalid_argument("float32 block: byte count not a multiple of 4");
    std::vector<float> out(bytes.size() / 4);
    for (size_t i = 0; i < out.size(); ++i) {
        const uint32_t bits = static_cast<uint32_t>(bytes[i * 4]) |
                              (static_cast<uint32_t>(bytes[i * 4 + 1]) << 8) |
                              (static_cast<uint32_t>(bytes[i * 4 + 2]) << 16) |
                              (static_cast<uint32_t>(bytes[i * 4 + 3]) << 24);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

}  // namespace limtr
