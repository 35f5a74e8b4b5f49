#include "masklab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "masklab/error.hpp"
#include "masklab/formats.hpp"
#include "masklab/rng.hpp"

namespace masklab {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// Seed-stream offsets so phones, utterances and noise draw from unrelated
// substreams of the master seed.
constexpr std::uint64_t kPhoneStream = 1ULL << 40;
constexpr std::uint64_t kNoiseStream = 1ULL << 41;

struct PhoneEnvelope {
    struct Peak {
        double center_hz;
        double width_hz;
        double gain;
    };
    std::vector<Peak> peaks;

    double at(double hz) const {
        double g = 0.01;  // spectral floor keeps every harmonic faintly present
        for (const auto& p : peaks) {
            const double d = (hz - p.center_hz) / p.width_hz;
            g += p.gain * std::exp(-0.5 * d * d);
        }
        return g;
    }
};

PhoneEnvelope make_envelope(std::uint64_t master_seed, int phone) {
    Rng rng(mix_seed(master_seed, kPhoneStream + static_cast<std::uint64_t>(phone)));
    PhoneEnvelope env;
    const int n_peaks = 2 + static_cast<int>(rng.uniform_int(2));
    for (int i = 0; i < n_peaks; ++i) {
        PhoneEnvelope::Peak p;
        p.center_hz = rng.uniform(300.0, 7000.0);
        p.width_hz = rng.uniform(80.0, 400.0);
        p.gain = rng.uniform(0.5, 1.0);
        env.peaks.push_back(p);
    }
    return env;
}

}  // namespace

void CorpusSpec::validate() const {
    if (n_speakers < 1 || n_phones < 1 || n_utterances < 1) {
        throw DomainError("corpus: speaker/phone/utterance counts must be >= 1");
    }
    if (n_phones > kMaxPhones) {
        throw DomainError("corpus: n_phones exceeds cap of " + std::to_string(kMaxPhones));
    }
    if (n_speakers > kMaxSpeakers) {
        throw DomainError("corpus: n_speakers exceeds cap of " + std::to_string(kMaxSpeakers));
    }
    if (sample_rate <= 0.0 || utterance_seconds <= 0.0) {
        throw DomainError("corpus: sample_rate and utterance_seconds must be positive");
    }
}

double speaker_f0(const CorpusSpec& spec, int speaker) {
    if (speaker < 0 || speaker >= spec.n_speakers) {
        throw DomainError("corpus: speaker out of range");
    }
    return 90.0 + 12.0 * static_cast<double>(speaker);
}

std::vector<Utterance> generate(const CorpusSpec& spec, const DspConfig& framing) {
    spec.validate();
    framing.validate();
    if (framing.sample_rate != spec.sample_rate) {
        throw DomainError("corpus: framing sample_rate differs from corpus sample_rate");
    }

    const auto n_samples =
        static_cast<std::size_t>(std::llround(spec.utterance_seconds * spec.sample_rate));
    const std::size_t n_frames = frame_count(n_samples, framing);
    if (n_frames < 3) {
        throw DomainError("corpus: utterance too short for a single phone segment");
    }

    std::vector<PhoneEnvelope> envelopes;
    envelopes.reserve(spec.n_phones);
    for (int p = 0; p < spec.n_phones; ++p) envelopes.push_back(make_envelope(spec.seed, p));

    const double harmonic_cap_hz = std::min(0.975 * spec.sample_rate / 2.0, 7800.0);

    std::vector<Utterance> corpus;
    corpus.reserve(spec.n_utterances);
    for (int u = 0; u < spec.n_utterances; ++u) {
        Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(u)));
        Utterance utt;
        {
            std::ostringstream os;
            os << "utt";
            os.width(4);
            os.fill('0');
            os << u;
            utt.id = os.str();
        }
        utt.sample_rate = spec.sample_rate;
        utt.speaker_id = u % spec.n_speakers;
        const double f0 = speaker_f0(spec, utt.speaker_id);
        const int n_harm = std::max(1, static_cast<int>(harmonic_cap_hz / f0));

        // Random-length phone segments, each at least 3 frames. A short
        // remainder merges into the previous segment.
        std::vector<std::uint32_t> segment_phone;
        std::vector<std::size_t> segment_end_frame;
        std::size_t frame = 0;
        while (frame < n_frames) {
            std::size_t len = 3 + rng.uniform_int(10);
            if (n_frames - frame < len + 3) len = n_frames - frame;
            frame += len;
            segment_phone.push_back(static_cast<std::uint32_t>(
                rng.uniform_int(static_cast<std::uint64_t>(spec.n_phones))));
            segment_end_frame.push_back(frame);
        }

        utt.phone_labels.resize(n_frames);
        {
            std::size_t seg = 0;
            for (std::size_t t = 0; t < n_frames; ++t) {
                while (t >= segment_end_frame[seg]) ++seg;
                utt.phone_labels[t] = segment_phone[seg];
            }
        }

        // Per-harmonic amplitude for each segment's phone.
        std::vector<double> amps(segment_phone.size() * static_cast<std::size_t>(n_harm));
        for (std::size_t s = 0; s < segment_phone.size(); ++s) {
            const PhoneEnvelope& env = envelopes[segment_phone[s]];
            for (int h = 0; h < n_harm; ++h) {
                const double hz = f0 * static_cast<double>(h + 1);
                amps[s * n_harm + static_cast<std::size_t>(h)] =
                    hz <= harmonic_cap_hz ? env.at(hz) : 0.0;
            }
        }

        // Harmonic oscillator bank via the sine recurrence
        //   s[n+1] = 2 cos(w) s[n] - s[n-1],
        // one state pair per harmonic, phases continuous across segments.
        std::vector<double> phase(n_harm);
        for (auto& ph : phase) ph = rng.uniform(0.0, kTwoPi);
        std::vector<double> s_prev(n_harm), s_curr(n_harm), two_cos(n_harm);
        for (int h = 0; h < n_harm; ++h) {
            const double w = kTwoPi * f0 * static_cast<double>(h + 1) / spec.sample_rate;
            two_cos[h] = 2.0 * std::cos(w);
            s_prev[h] = std::sin(phase[h] - w);
            s_curr[h] = std::sin(phase[h]);
        }

        std::vector<double> wave(n_samples, 0.0);
        std::size_t seg = 0;
        for (std::size_t n = 0; n < n_samples; ++n) {
            // Segment of the frame whose span this sample starts; the tail
            // past the last frame stays in the final segment.
            const std::size_t t = std::min(n / framing.frame_shift, n_frames - 1);
            while (t >= segment_end_frame[seg]) ++seg;
            const double* a = amps.data() + seg * static_cast<std::size_t>(n_harm);
            double acc = 0.0;
            for (int h = 0; h < n_harm; ++h) {
                acc += a[h] * s_curr[h];
                const double next = two_cos[h] * s_curr[h] - s_prev[h];
                s_prev[h] = s_curr[h];
                s_curr[h] = next;
            }
            wave[n] = acc;
        }

        // Normalize to RMS 0.1 so PCM16 export never clips.
        double power = 0.0;
        for (double x : wave) power += x * x;
        power /= static_cast<double>(n_samples);
        const double gain = power > 0.0 ? 0.1 / std::sqrt(power) : 1.0;

        utt.samples.resize(n_samples);
        for (std::size_t n = 0; n < n_samples; ++n) {
            utt.samples[n] = static_cast<float>(wave[n] * gain);
        }
        utt.clean_samples = utt.samples;

        if (spec.noise_snr_db) {
            Rng noise_rng(mix_seed(spec.seed, kNoiseStream + static_cast<std::uint64_t>(u)));
            std::vector<double> noise(n_samples);
            double noise_power = 0.0;
            for (auto& x : noise) {
                x = noise_rng.normal();
                noise_power += x * x;
            }
            noise_power /= static_cast<double>(n_samples);
            double signal_power = 0.0;
            for (float x : utt.samples) signal_power += static_cast<double>(x) * x;
            signal_power /= static_cast<double>(n_samples);
            const double target = signal_power / std::pow(10.0, *spec.noise_snr_db / 10.0);
            const double scale = noise_power > 0.0 ? std::sqrt(target / noise_power) : 0.0;
            for (std::size_t n = 0; n < n_samples; ++n) {
                utt.samples[n] =
                    static_cast<float>(static_cast<double>(utt.samples[n]) + scale * noise[n]);
            }
        }

        corpus.push_back(std::move(utt));
    }
    return corpus;
}

// ---- WAV ------------------------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               double sample_rate) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("wav: cannot open for writing: " + path.string());
    const auto rate = static_cast<std::uint32_t>(std::llround(sample_rate));
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    os.write("RIFF", 4);
    put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 1);  // PCM
    put_u16(os, 1);  // mono
    put_u32(os, rate);
    put_u32(os, rate * 2);
    put_u16(os, 2);
    put_u16(os, 16);
    os.write("data", 4);
    put_u32(os, data_bytes);
    for (float x : samples) {
        long v = std::lround(static_cast<double>(x) * 32767.0);
        v = std::clamp(v, -32768L, 32767L);
        put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    if (!os) throw IoError("wav: write failed: " + path.string());
}

std::pair<std::vector<float>, double> read_wav(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("wav: cannot open: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("wav: not a RIFF/WAVE file: " + path.string());
    }
    std::size_t pos = 12;
    double rate = 0.0;
    std::uint16_t channels = 0, bits = 0, codec = 0;
    std::vector<float> samples;
    bool have_fmt = false, have_data = false;
    while (pos + 8 <= bytes.size()) {
        const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t size = get_u32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) {
            throw FormatError("wav: truncated chunk in " + path.string());
        }
        if (std::memcmp(tag, "fmt ", 4) == 0 && size >= 16) {
            codec = get_u16(bytes.data() + body);
            channels = get_u16(bytes.data() + body + 2);
            rate = get_u32(bytes.data() + body + 4);
            bits = get_u16(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw FormatError("wav: data chunk before fmt in " + path.string());
            if (codec != 1 || channels != 1 || bits != 16) {
                throw FormatError("wav: only 16-bit PCM mono is supported: " + path.string());
            }
            const std::size_t n = size / 2;
            samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto v =
                    static_cast<std::int16_t>(get_u16(bytes.data() + body + i * 2));
                samples[i] = static_cast<float>(v) / 32768.0f;
            }
            have_data = true;
        }
        pos = body + size + (size & 1);
    }
    if (!have_data) throw FormatError("wav: missing data chunk: " + path.string());
    return {std::move(samples), rate};
}

bool is_eval_utterance(const std::string& id) { return fnv1a64(id) % 5 == 0; }

// ---- manifest ---------------------------------------------------------------

std::vector<Utterance> load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("manifest: cannot open: " + path.string());
    const std::filesystem::path base = path.parent_path();

    std::vector<Utterance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
            throw FormatError("manifest: malformed line " + std::to_string(line_no) + " in " +
                              path.string());
        }
        Utterance utt;
        utt.id = fields[0];
        std::filesystem::path wav = fields[1];
        if (wav.is_relative()) wav = base / wav;
        if (!std::filesystem::exists(wav)) {
            throw IoError("manifest: missing audio file: " + wav.string());
        }
        auto [samples, rate] = read_wav(wav);
        utt.samples = std::move(samples);
        utt.sample_rate = rate;
        if (fields.size() >= 3 && !fields[2].empty()) {
            try {
                utt.speaker_id = std::stoi(fields[2]);
            } catch (const std::exception&) {
                throw FormatError("manifest: bad speaker id on line " + std::to_string(line_no) +
                                  " in " + path.string());
            }
        }
        if (fields.size() >= 4 && !fields[3].empty()) {
            std::filesystem::path labels = fields[3];
            if (labels.is_relative()) labels = base / labels;
            if (!std::filesystem::exists(labels)) {
                throw IoError("manifest: missing label file: " + labels.string());
            }
            utt.phone_labels = read_tensor_u32(labels);
        }
        out.push_back(std::move(utt));
    }
    return out;
}

}  // namespace masklab
