#include "masklab/dsp.hpp"

#include <cmath>
#include <string>

#include "masklab/error.hpp"

namespace masklab {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Iterative radix-2 complex FFT, in place. Twiddles recomputed per stage;
// n is validated as a power of two in DspConfig::validate().
void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

}  // namespace

void DspConfig::validate() const {
    if (sample_rate <= 0.0) throw DomainError("dsp: sample_rate must be positive");
    if (frame_shift == 0 || frame_shift > frame_length || frame_length > n_fft) {
        throw DomainError("dsp: need 0 < frame_shift <= frame_length <= n_fft");
    }
    if (!is_pow2(n_fft)) throw DomainError("dsp: n_fft must be a power of two");
    if (n_mels == 0 || n_mfcc == 0 || n_mfcc > n_mels) {
        throw DomainError("dsp: need 1 <= n_mfcc <= n_mels");
    }
    if (log_floor <= 0.0) throw DomainError("dsp: log_floor must be positive");
    if (!(mel_fmin >= 0.0) || !(mel_fmax > mel_fmin) || mel_fmax > sample_rate / 2.0) {
        throw DomainError("dsp: need 0 <= mel_fmin < mel_fmax <= sample_rate/2");
    }
}

std::size_t frame_count(std::size_t n_samples, const DspConfig& cfg) {
    if (n_samples < cfg.frame_length) {
        throw DomainError("dsp: input of " + std::to_string(n_samples) +
                          " samples is shorter than one frame (" +
                          std::to_string(cfg.frame_length) + ")");
    }
    return 1 + (n_samples - cfg.frame_length) / cfg.frame_shift;
}

std::vector<double> mel_filterbank(const DspConfig& cfg) {
    const std::size_t bins = cfg.n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.mel_fmin);
    const double mel_hi = hz_to_mel(cfg.mel_fmax);
    std::vector<double> edges_hz(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges_hz.size(); ++i) {
        const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                        static_cast<double>(cfg.n_mels + 1);
        edges_hz[i] = mel_to_hz(mel);
    }
    // Peak-1 triangles. Adjacent rise and fall sum to 1 at every interior
    // bin, so the per-bin total weight never exceeds 1.
    std::vector<double> fb(cfg.n_mels * bins, 0.0);
    const double hz_per_bin = cfg.sample_rate / static_cast<double>(cfg.n_fft);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double left = edges_hz[m], center = edges_hz[m + 1], right = edges_hz[m + 2];
        for (std::size_t b = 0; b < bins; ++b) {
            const double f = static_cast<double>(b) * hz_per_bin;
            double w = 0.0;
            if (f > left && f < center) {
                w = (f - left) / (center - left);
            } else if (f >= center && f < right) {
                w = (right - f) / (right - center);
            }
            fb[m * bins + b] = w;
        }
    }
    return fb;
}

double mel_band_center_hz(const DspConfig& cfg, std::size_t band) {
    if (band >= cfg.n_mels) throw DomainError("dsp: mel band out of range");
    const double mel_lo = hz_to_mel(cfg.mel_fmin);
    const double mel_hi = hz_to_mel(cfg.mel_fmax);
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(band + 1) /
                                    static_cast<double>(cfg.n_mels + 1);
    return mel_to_hz(mel);
}

FeatureSequence stft_magnitude(std::span<const float> samples, const DspConfig& cfg) {
    cfg.validate();
    const std::size_t frames = frame_count(samples.size(), cfg);
    const std::size_t bins = cfg.n_fft / 2 + 1;

    std::vector<double> window(cfg.frame_length);
    for (std::size_t i = 0; i < cfg.frame_length; ++i) {
        window[i] = cfg.window == WindowKind::hann
                        ? 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                               static_cast<double>(cfg.frame_length))
                        : 1.0;
    }

    FeatureSequence out;
    out.frames = frames;
    out.dims = bins;
    out.frame_rate = cfg.frame_rate();
    out.kind = FeatureKind::logmel;  // carrier only; magnitude is an intermediate
    out.data.resize(frames * bins);

    std::vector<double> re(cfg.n_fft), im(cfg.n_fft);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * cfg.frame_shift;
        for (std::size_t i = 0; i < cfg.n_fft; ++i) {
            re[i] = i < cfg.frame_length
                        ? static_cast<double>(samples[start + i]) * window[i]
                        : 0.0;
            im[i] = 0.0;
        }
        fft_inplace(re, im);
        for (std::size_t b = 0; b < bins; ++b) {
            out.data[t * bins + b] =
                static_cast<float>(std::sqrt(re[b] * re[b] + im[b] * im[b]));
        }
    }
    return out;
}

FeatureSequence log_mel(std::span<const float> samples, const DspConfig& cfg) {
    FeatureSequence mag = stft_magnitude(samples, cfg);
    const std::size_t bins = mag.dims;
    const std::vector<double> fb = mel_filterbank(cfg);

    FeatureSequence out;
    out.frames = mag.frames;
    out.dims = cfg.n_mels;
    out.frame_rate = cfg.frame_rate();
    out.kind = FeatureKind::logmel;
    out.data.resize(out.frames * out.dims);

    for (std::size_t t = 0; t < mag.frames; ++t) {
        const float* mrow = mag.row(t);
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            double energy = 0.0;
            const double* w = fb.data() + m * bins;
            for (std::size_t b = 0; b < bins; ++b) {
                const double v = static_cast<double>(mrow[b]);
                energy += w[b] * v * v;
            }
            out.data[t * cfg.n_mels + m] =
                static_cast<float>(std::log(std::max(energy, cfg.log_floor)));
        }
    }
    return out;
}

FeatureSequence mfcc(std::span<const float> samples, const DspConfig& cfg) {
    FeatureSequence lm = log_mel(samples, cfg);
    const std::size_t n = cfg.n_mels;

    // Orthonormal DCT-II basis, first n_mfcc rows.
    std::vector<double> dct(cfg.n_mfcc * n);
    for (std::size_t k = 0; k < cfg.n_mfcc; ++k) {
        const double s = k == 0 ? std::sqrt(1.0 / static_cast<double>(n))
                                : std::sqrt(2.0 / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            dct[k * n + i] =
                s * std::cos(kPi * (2.0 * static_cast<double>(i) + 1.0) *
                             static_cast<double>(k) / (2.0 * static_cast<double>(n)));
        }
    }

    const std::size_t base = cfg.n_mfcc;
    const std::size_t dims = cfg.append_deltas ? 3 * base : base;
    FeatureSequence out;
    out.frames = lm.frames;
    out.dims = dims;
    out.frame_rate = cfg.frame_rate();
    out.kind = FeatureKind::mfcc;
    out.data.resize(out.frames * dims);

    for (std::size_t t = 0; t < lm.frames; ++t) {
        const float* x = lm.row(t);
        for (std::size_t k = 0; k < base; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += dct[k * n + i] * x[i];
            out.data[t * dims + k] = static_cast<float>(acc);
        }
    }

    if (cfg.append_deltas) {
        // Two-pass regression deltas with window 2, clamped at the edges.
        const auto coef = [&](std::size_t t, std::size_t k, std::size_t block) -> double {
            return static_cast<double>(out.data[t * dims + block * base + k]);
        };
        const long last = static_cast<long>(lm.frames) - 1;
        for (std::size_t block = 0; block < 2; ++block) {
            for (long t = 0; t <= last; ++t) {
                for (std::size_t k = 0; k < base; ++k) {
                    double num = 0.0;
                    for (long w = 1; w <= 2; ++w) {
                        const auto tp = static_cast<std::size_t>(std::min(t + w, last));
                        const auto tm = static_cast<std::size_t>(std::max(t - w, 0L));
                        num += static_cast<double>(w) *
                               (coef(tp, k, block) - coef(tm, k, block));
                    }
                    out.data[static_cast<std::size_t>(t) * dims + (block + 1) * base + k] =
                        static_cast<float>(num / 10.0);  // 2 * (1^2 + 2^2)
                }
            }
        }
    }
    return out;
}

}  // namespace masklab
