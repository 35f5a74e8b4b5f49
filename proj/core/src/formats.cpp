#include "masklab/formats.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "masklab/hash.hpp"

namespace masklab {

namespace {

void put_bytes(std::ostream& os, const void* data, std::size_t len) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

void get_bytes(std::istream& is, void* data, std::size_t len, const char* what) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(is.gcount()) != len) {
        throw FormatError(std::string("format: truncated file while reading ") + what);
    }
}

template <class U>
void put_le(std::ostream& os, U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, sizeof(U));
}

template <class U>
U get_le(std::istream& is, const char* what) {
    unsigned char b[sizeof(U)];
    get_bytes(is, b, sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    put_bytes(os, s.data(), s.size());
}

std::string get_string(std::istream& is, const char* what) {
    const auto len = get_le<std::uint32_t>(is, what);
    std::string s(len, '\0');
    if (len) get_bytes(is, s.data(), len, what);
    return s;
}

void check_magic(std::istream& is, const char magic[4], const char* what) {
    char buf[4];
    get_bytes(is, buf, 4, what);
    if (std::memcmp(buf, magic, 4) != 0) {
        throw FormatError(std::string("format: bad magic for ") + what + ", expected " +
                          std::string(magic, 4));
    }
}

void check_version(std::istream& is, const char* what) {
    const auto v = get_le<std::uint32_t>(is, what);
    if (v != kFormatVersion) {
        throw FormatError(std::string("format: unsupported ") + what + " version " +
                          std::to_string(v) + ", expected " + std::to_string(kFormatVersion));
    }
}

std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::f64: return 8;
        case Dtype::u32: return 4;
    }
    throw FormatError("format: unknown dtype code");
}

std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError(std::string("format: bad numeric field in ") + what);
    }
    return v;
}

}  // namespace

AnyTensor AnyTensor::of(std::vector<std::uint64_t> dims, std::vector<float> data) {
    AnyTensor t;
    t.dtype = Dtype::f32;
    t.dims = std::move(dims);
    t.f32 = std::move(data);
    if (t.numel() != t.f32.size()) throw DomainError("tensor file: dims do not match payload");
    return t;
}

AnyTensor AnyTensor::of(std::vector<std::uint64_t> dims, std::vector<double> data) {
    AnyTensor t;
    t.dtype = Dtype::f64;
    t.dims = std::move(dims);
    t.f64 = std::move(data);
    if (t.numel() != t.f64.size()) throw DomainError("tensor file: dims do not match payload");
    return t;
}

AnyTensor AnyTensor::of(std::vector<std::uint64_t> dims, std::vector<std::uint32_t> data) {
    AnyTensor t;
    t.dtype = Dtype::u32;
    t.dims = std::move(dims);
    t.u32 = std::move(data);
    if (t.numel() != t.u32.size()) throw DomainError("tensor file: dims do not match payload");
    return t;
}

void write_tensor(std::ostream& os, const AnyTensor& t) {
    put_bytes(os, "MTL1", 4);
    put_le<std::uint32_t>(os, kFormatVersion);
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(os, d);

    std::vector<unsigned char> payload(t.numel() * dtype_size(t.dtype));
    unsigned char* p = payload.data();
    switch (t.dtype) {
        case Dtype::f32:
            for (float v : t.f32) {
                const auto bits = std::bit_cast<std::uint32_t>(v);
                for (int i = 0; i < 4; ++i) *p++ = static_cast<unsigned char>(bits >> (8 * i));
            }
            break;
        case Dtype::f64:
            for (double v : t.f64) {
                const auto bits = std::bit_cast<std::uint64_t>(v);
                for (int i = 0; i < 8; ++i) *p++ = static_cast<unsigned char>(bits >> (8 * i));
            }
            break;
        case Dtype::u32:
            for (std::uint32_t v : t.u32) {
                for (int i = 0; i < 4; ++i) *p++ = static_cast<unsigned char>(v >> (8 * i));
            }
            break;
    }
    put_bytes(os, payload.data(), payload.size());
    put_le<std::uint32_t>(os, Crc32::of(payload.data(), payload.size()));
}

AnyTensor read_tensor(std::istream& is) {
    check_magic(is, "MTL1", "tensor");
    check_version(is, "tensor");
    const auto dtype_code = get_le<std::uint8_t>(is, "tensor dtype");
    if (dtype_code > 2) {
        throw FormatError("format: unknown tensor dtype code " + std::to_string(dtype_code));
    }
    AnyTensor t;
    t.dtype = static_cast<Dtype>(dtype_code);
    const auto ndim = get_le<std::uint8_t>(is, "tensor ndim");
    t.dims.resize(ndim);
    for (auto& d : t.dims) d = get_le<std::uint64_t>(is, "tensor dims");

    const std::uint64_t numel = t.numel();
    const std::size_t elem = dtype_size(t.dtype);
    if (numel > (1ULL << 40) / elem) throw FormatError("format: tensor payload too large");
    std::vector<unsigned char> payload(numel * elem);
    if (!payload.empty()) get_bytes(is, payload.data(), payload.size(), "tensor payload");
    const auto crc = get_le<std::uint32_t>(is, "tensor crc");
    if (crc != Crc32::of(payload.data(), payload.size())) {
        throw FormatError("format: tensor payload CRC mismatch");
    }

    const unsigned char* p = payload.data();
    auto next_u32 = [&p] {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(*p++) << (8 * i);
        return v;
    };
    auto next_u64 = [&p] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(*p++) << (8 * i);
        return v;
    };
    switch (t.dtype) {
        case Dtype::f32:
            t.f32.resize(numel);
            for (auto& v : t.f32) v = std::bit_cast<float>(next_u32());
            break;
        case Dtype::f64:
            t.f64.resize(numel);
            for (auto& v : t.f64) v = std::bit_cast<double>(next_u64());
            break;
        case Dtype::u32:
            t.u32.resize(numel);
            for (auto& v : t.u32) v = next_u32();
            break;
    }
    return t;
}

void write_tensor_file(const std::filesystem::path& path, const AnyTensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("tensor: cannot open for writing: " + path.string());
    write_tensor(os, t);
    if (!os) throw IoError("tensor: write failed: " + path.string());
}

AnyTensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("tensor: cannot open: " + path.string());
    return read_tensor(is);
}

std::vector<std::uint32_t> read_tensor_u32(const std::filesystem::path& path) {
    AnyTensor t = read_tensor_file(path);
    if (t.dtype != Dtype::u32 || t.dims.size() != 1) {
        throw FormatError("tensor: expected 1-D u32 tensor in " + path.string());
    }
    return std::move(t.u32);
}

void write_tensor_u32(const std::filesystem::path& path,
                      const std::vector<std::uint32_t>& values) {
    write_tensor_file(path, AnyTensor::of({values.size()}, values));
}

// ---- TGTS -------------------------------------------------------------------

void write_targets(const std::filesystem::path& path, const TargetBundle& bundle) {
    bundle.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("targets: cannot open for writing: " + path.string());
    put_bytes(os, "TGT1", 4);
    put_le<std::uint32_t>(os, kFormatVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(bundle.streams.size()));
    const std::size_t n_utt = bundle.n_utterances();
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(n_utt));
    for (std::size_t u = 0; u < n_utt; ++u) {
        put_le<std::uint64_t>(os, bundle.streams.front().ids[u].size());
    }
    for (const auto& s : bundle.streams) {
        put_string(os, s.name);
        put_le<std::uint32_t>(os, s.vocab_size);
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.layer_or_level));
        std::vector<std::uint32_t> flat;
        for (const auto& ids : s.ids) flat.insert(flat.end(), ids.begin(), ids.end());
        write_tensor(os, AnyTensor::of({flat.size()}, flat));
    }
    if (!os) throw IoError("targets: write failed: " + path.string());
}

TargetBundle read_targets(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("targets: cannot open: " + path.string());
    check_magic(is, "TGT1", "targets");
    check_version(is, "targets");
    const auto n_streams = get_le<std::uint32_t>(is, "targets stream count");
    const auto n_utt = get_le<std::uint32_t>(is, "targets utterance count");
    std::vector<std::uint64_t> frames(n_utt);
    std::uint64_t total = 0;
    for (auto& f : frames) {
        f = get_le<std::uint64_t>(is, "targets frame counts");
        total += f;
    }
    TargetBundle bundle;
    for (std::uint32_t s = 0; s < n_streams; ++s) {
        TargetStream stream;
        stream.name = get_string(is, "targets stream name");
        stream.vocab_size = get_le<std::uint32_t>(is, "targets vocab size");
        stream.layer_or_level =
            static_cast<std::int32_t>(get_le<std::uint32_t>(is, "targets layer"));
        AnyTensor t = read_tensor(is);
        if (t.dtype != Dtype::u32 || t.dims.size() != 1 || t.u32.size() != total) {
            throw FormatError("targets: stream block shape mismatch in " + path.string());
        }
        std::size_t off = 0;
        stream.ids.resize(n_utt);
        for (std::uint32_t u = 0; u < n_utt; ++u) {
            stream.ids[u].assign(t.u32.begin() + static_cast<long>(off),
                                 t.u32.begin() + static_cast<long>(off + frames[u]));
            off += frames[u];
        }
        bundle.streams.push_back(std::move(stream));
    }
    bundle.validate();
    return bundle;
}

// ---- archives ---------------------------------------------------------------

const AnyTensor* TensorArchive::find(const std::string& name) const {
    for (const auto& [n, t] : items) {
        if (n == name) return &t;
    }
    return nullptr;
}

void write_archive(const std::filesystem::path& path, const char magic[4],
                   const TensorArchive& archive) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("archive: cannot open for writing: " + path.string());
    put_bytes(os, magic, 4);
    put_le<std::uint32_t>(os, kFormatVersion);
    put_le<std::uint64_t>(os, archive.config_text.size());
    put_bytes(os, archive.config_text.data(), archive.config_text.size());
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(archive.items.size()));
    for (const auto& [name, tensor] : archive.items) {
        put_string(os, name);
        write_tensor(os, tensor);
    }
    if (!os) throw IoError("archive: write failed: " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path, const char magic[4]) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("archive: cannot open: " + path.string());
    check_magic(is, magic, "archive");
    check_version(is, "archive");
    TensorArchive archive;
    const auto cfg_len = get_le<std::uint64_t>(is, "archive config length");
    archive.config_text.resize(cfg_len);
    if (cfg_len) get_bytes(is, archive.config_text.data(), cfg_len, "archive config");
    const auto n_items = get_le<std::uint32_t>(is, "archive item count");
    for (std::uint32_t i = 0; i < n_items; ++i) {
        std::string name = get_string(is, "archive item name");
        AnyTensor t = read_tensor(is);
        archive.items.emplace_back(std::move(name), std::move(t));
    }
    return archive;
}

// ---- codebook ---------------------------------------------------------------

void write_codebook(const std::filesystem::path& path, const Codebook& cb) {
    TensorArchive archive;
    std::ostringstream cfg;
    cfg << "k=" << cb.k << "\n";
    cfg << "d=" << cb.d << "\n";
    cfg << "kind=" << static_cast<int>(cb.source.kind) << "\n";
    cfg << "layer=" << cb.source.layer << "\n";
    cfg << "iteration=" << cb.source.iteration << "\n";
    cfg << "inertia=" << fmt_double(cb.inertia) << "\n";
    archive.config_text = cfg.str();
    archive.items.emplace_back("centroids", AnyTensor::of({cb.k, cb.d}, cb.centroids));
    if (!cb.dim_mean.empty()) {
        archive.items.emplace_back("dim_mean", AnyTensor::of({cb.d}, cb.dim_mean));
        archive.items.emplace_back("dim_scale", AnyTensor::of({cb.d}, cb.dim_scale));
    }
    write_archive(path, kCodebookMagic, archive);
}

Codebook read_codebook(const std::filesystem::path& path) {
    TensorArchive archive = read_archive(path, kCodebookMagic);
    Codebook cb;
    std::istringstream cfg(archive.config_text);
    std::string line;
    while (std::getline(cfg, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "k") cb.k = static_cast<std::size_t>(parse_double(val, "codebook k"));
        else if (key == "d") cb.d = static_cast<std::size_t>(parse_double(val, "codebook d"));
        else if (key == "kind")
            cb.source.kind = static_cast<FeatureKind>(
                static_cast<int>(parse_double(val, "codebook kind")));
        else if (key == "layer")
            cb.source.layer = static_cast<std::int32_t>(parse_double(val, "codebook layer"));
        else if (key == "iteration")
            cb.source.iteration =
                static_cast<std::int32_t>(parse_double(val, "codebook iteration"));
        else if (key == "inertia")
            cb.inertia = parse_double(val, "codebook inertia");
    }
    const AnyTensor* centroids = archive.find("centroids");
    if (!centroids || centroids->dtype != Dtype::f64 || centroids->dims.size() != 2 ||
        centroids->dims[0] != cb.k || centroids->dims[1] != cb.d) {
        throw FormatError("codebook: missing or malformed centroid block in " + path.string());
    }
    cb.centroids = centroids->f64;
    if (const AnyTensor* m = archive.find("dim_mean")) cb.dim_mean = m->f64;
    if (const AnyTensor* s = archive.find("dim_scale")) cb.dim_scale = s->f64;
    return cb;
}

}  // namespace masklab
