#ifndef MASKLAB_FORMATS_HPP
#define MASKLAB_FORMATS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "masklab/bundle.hpp"
#include "masklab/kmeans.hpp"

// Binary on-disk formats. All integers little-endian, payloads row-major,
// every tensor payload guarded by a trailing CRC-32. Byte layouts are
// documented in docs/formats.md; writers are canonical, so a read-write
// cycle reproduces the input byte for byte.

namespace masklab {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1, u32 = 2 };

// A tensor of one of the three wire dtypes; exactly one payload vector is
// populated, matching `dtype`.
struct AnyTensor {
    Dtype dtype = Dtype::f32;
    std::vector<std::uint64_t> dims;
    std::vector<float> f32;
    std::vector<double> f64;
    std::vector<std::uint32_t> u32;

    std::uint64_t numel() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }

    static AnyTensor of(std::vector<std::uint64_t> dims, std::vector<float> data);
    static AnyTensor of(std::vector<std::uint64_t> dims, std::vector<double> data);
    static AnyTensor of(std::vector<std::uint64_t> dims, std::vector<std::uint32_t> data);
};

// TENSOR format, magic "MTL1".
void write_tensor(std::ostream& os, const AnyTensor& t);
AnyTensor read_tensor(std::istream& is);
void write_tensor_file(const std::filesystem::path& path, const AnyTensor& t);
AnyTensor read_tensor_file(const std::filesystem::path& path);

// Convenience: 1-D u32 tensor (frame label files).
std::vector<std::uint32_t> read_tensor_u32(const std::filesystem::path& path);
void write_tensor_u32(const std::filesystem::path& path,
                      const std::vector<std::uint32_t>& values);

// TGTS format, magic "TGT1": stream header + one u32 TENSOR block per stream.
void write_targets(const std::filesystem::path& path, const TargetBundle& bundle);
TargetBundle read_targets(const std::filesystem::path& path);

// Named-tensor archive: config echo + ordered (name, tensor) pairs. CKPT
// ("CKP1") holds model parameters, RVQM ("RVQ1") quantizer state, CBK1
// codebooks.
struct TensorArchive {
    std::string config_text;
    std::vector<std::pair<std::string, AnyTensor>> items;

    const AnyTensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const char magic[4],
                   const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path, const char magic[4]);

inline constexpr char kCkptMagic[4] = {'C', 'K', 'P', '1'};
inline constexpr char kRvqMagic[4] = {'R', 'V', 'Q', '1'};
inline constexpr char kCodebookMagic[4] = {'C', 'B', 'K', '1'};

void write_codebook(const std::filesystem::path& path, const Codebook& cb);
Codebook read_codebook(const std::filesystem::path& path);

}  // namespace masklab

#endif  // MASKLAB_FORMATS_HPP
