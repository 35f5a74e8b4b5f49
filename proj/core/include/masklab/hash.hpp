#ifndef MASKLAB_HASH_HPP
#define MASKLAB_HASH_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace masklab {

// FNV-1a 64-bit. Used for config hashes, the train/eval split rule, and
// frozen-parameter checks.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

std::string to_hex(std::uint64_t value);

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320), the checksum zlib uses.
// Guards every binary payload in the on-disk formats.
class Crc32 {
public:
    Crc32() = default;

    void update(const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            crc_ = table()[(crc_ ^ bytes[i]) & 0xff] ^ (crc_ >> 8);
        }
    }

    std::uint32_t value() const { return crc_ ^ 0xffffffffU; }

    static std::uint32_t of(const void* data, std::size_t len) {
        Crc32 c;
        c.update(data, len);
        return c.value();
    }

private:
    static const std::array<std::uint32_t, 256>& table();

    std::uint32_t crc_ = 0xffffffffU;
};

}  // namespace masklab

#endif  // MASKLAB_HASH_HPP
