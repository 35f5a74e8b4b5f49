#ifndef MASKLAB_CORPUS_HPP
#define MASKLAB_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "masklab/dsp.hpp"

namespace masklab {

struct Utterance {
    std::string id;
    std::vector<float> samples;               // waveform at sample_rate
    double sample_rate = 16000.0;
    std::vector<std::uint32_t> phone_labels;  // one per frame; empty when unknown
    std::int32_t speaker_id = -1;             // -1 when unknown
    std::optional<std::vector<float>> clean_samples;
};

struct CorpusSpec {
    int n_speakers = 8;
    int n_phones = 12;
    int n_utterances = 200;
    double utterance_seconds = 2.0;
    double sample_rate = 16000.0;
    std::optional<double> noise_snr_db;
    std::uint64_t seed = 0;

    void validate() const;
};

// Implementation caps, kept small so every phone/speaker stays separable
// in a 40-band mel spectrum.
inline constexpr int kMaxPhones = 64;
inline constexpr int kMaxSpeakers = 64;

// Fundamental frequency of a speaker. Linear ladder, 12 Hz apart, so any
// two speakers differ by well over 5 Hz.
double speaker_f0(const CorpusSpec& spec, int speaker);

// Deterministic synthetic corpus: each utterance is a run of random-length
// phone segments; a phone is a fixed 2-3 peak spectral envelope, a speaker a
// fixed f0; the waveform is a sum of f0 harmonics shaped by the envelope.
// Frame labels follow the framing of `framing` (label = phone active at the
// frame center). Optional white noise at noise_snr_db; the pre-noise signal
// is kept in clean_samples.
std::vector<Utterance> generate(const CorpusSpec& spec, const DspConfig& framing = DspConfig{});

// Manifest: UTF-8 text, one record per line,
//   <id>\t<wav-path>\t[speaker_id]\t[phone-label-path]
// Relative paths resolve against the manifest's directory. Phone labels are
// 1-D u32 tensors in the TENSOR format.
std::vector<Utterance> load_manifest(const std::filesystem::path& path);

// 16-bit PCM mono WAV. Samples clip to [-1, 1) on write.
void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               double sample_rate);
std::pair<std::vector<float>, double> read_wav(const std::filesystem::path& path);

// Stable 80/20 train/eval split by utterance id hash; true means eval.
bool is_eval_utterance(const std::string& id);

}  // namespace masklab

#endif  // MASKLAB_CORPUS_HPP
