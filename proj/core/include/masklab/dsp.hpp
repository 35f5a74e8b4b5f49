#ifndef MASKLAB_DSP_HPP
#define MASKLAB_DSP_HPP

#include <cstdint>
#include <span>
#include <vector>

namespace masklab {

enum class FeatureKind : std::uint8_t { mfcc = 0, logmel = 1, layer = 2, random_layer = 3 };

// Frames x dims matrix of per-frame features, row-major.
struct FeatureSequence {
    std::vector<float> data;
    std::size_t frames = 0;
    std::size_t dims = 0;
    double frame_rate = 0.0;  // frames per second
    FeatureKind kind = FeatureKind::logmel;

    const float* row(std::size_t r) const { return data.data() + r * dims; }
    float* row(std::size_t r) { return data.data() + r * dims; }
};

enum class WindowKind : std::uint8_t { hann = 0, rectangular = 1 };

struct DspConfig {
    double sample_rate = 16000.0;
    std::size_t frame_length = 400;  // 25 ms at 16 kHz
    std::size_t frame_shift = 160;   // 10 ms -> 100 frames/s
    std::size_t n_fft = 512;
    std::size_t n_mels = 40;
    std::size_t n_mfcc = 13;
    double mel_fmin = 20.0;
    double mel_fmax = 7600.0;
    double log_floor = 1e-10;
    WindowKind window = WindowKind::hann;
    bool append_deltas = false;  // append delta and delta-delta rows to MFCC

    double frame_rate() const { return sample_rate / static_cast<double>(frame_shift); }
    void validate() const;
};

// Exact frame count: 1 + floor((len - frame_length) / frame_shift), no padding.
std::size_t frame_count(std::size_t n_samples, const DspConfig& cfg);

// Triangular mel filterbank, rows are filters over the n_fft/2+1 magnitude
// bins. Each row peaks at 1 at its center bin.
std::vector<double> mel_filterbank(const DspConfig& cfg);

// Center frequency (Hz) of mel band b under cfg.
double mel_band_center_hz(const DspConfig& cfg, std::size_t band);

FeatureSequence stft_magnitude(std::span<const float> samples, const DspConfig& cfg);
FeatureSequence log_mel(std::span<const float> samples, const DspConfig& cfg);
FeatureSequence mfcc(std::span<const float> samples, const DspConfig& cfg);

}  // namespace masklab

#endif  // MASKLAB_DSP_HPP
