#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace stressnet {

/// Error type for all recoverable failures (bad input, bad file, shape
/// mismatch). Carries a human-readable message naming the offending value.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// CRC32 (IEEE 802.3 polynomial, reflected), streaming.
class Crc32 {
public:
    Crc32() : state_(0xFFFFFFFFu) {}

    void update(const void* data, size_t len) {
        const auto* p = static_cast<const uint8_t*>(data);
        uint32_t c = state_;
        for (size_t i = 0; i < len; ++i) {
            c = table()[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
        }
        state_ = c;
    }

    uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

    static uint32_t of(const void* data, size_t len) {
        Crc32 c;
        c.update(data, len);
        return c.value();
    }

private:
    static const std::array<uint32_t, 256>& table() {
        static const std::array<uint32_t, 256> t = [] {
            std::array<uint32_t, 256> tab{};
            for (uint32_t n = 0; n < 256; ++n) {
                uint32_t c = n;
                for (int k = 0; k < 8; ++k) {
                    c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
                }
                tab[n] = c;
            }
            return tab;
        }();
        return t;
    }

    uint32_t state_;
};

}  // namespace stressnet
