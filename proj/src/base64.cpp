#include "lager/base64.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <openssl/evp.h>

#include "lager/errors.hpp"

namespace lager::base64 {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

std::string encode(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) return {};
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> decode(std::string_view text) {
    if (text.empty()) return {};
    if (text.size() % 4 != 0) throw ValidationError("base64 payload length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw ValidationError("malformed base64 payload");
    // EVP_DecodeBlock keeps the bytes produced by '=' padding; strip them.
    std::size_t pad = 0;
    if (text.back() == '=') ++pad;
    if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string encode_floats(std::span<const float> values) {
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return encode(bytes);
}

std::vector<float> decode_floats(std::string_view text) {
    const auto bytes = decode(text);
    if (bytes.size() % 4 != 0) throw ValidationError("float payload is not a multiple of 4 bytes");
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

}  // namespace lager::base64
