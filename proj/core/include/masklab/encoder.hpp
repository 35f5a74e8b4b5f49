#ifndef MASKLAB_ENCODER_HPP
#define MASKLAB_ENCODER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "masklab/dsp.hpp"
#include "masklab/error.hpp"
#include "masklab/parallel.hpp"
#include "masklab/rng.hpp"
#include "masklab/tensor.hpp"

namespace masklab {

struct EncoderConfig {
    std::size_t n_layers = 6;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t d_ff = 512;
    std::size_t input_dims = 40;
    double mask_prob = 0.065;   // per-frame span start probability
    std::size_t mask_span = 10; // frames masked from each start
    bool sinusoidal_pos = true;
    double dropout = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_layers < 1) throw DomainError("encoder: n_layers must be >= 1");
        if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
            throw DomainError("encoder: d_model must be a positive multiple of n_heads");
        }
        if (d_ff == 0 || input_dims == 0) {
            throw DomainError("encoder: d_ff and input_dims must be positive");
        }
        if (!(mask_prob > 0.0 && mask_prob < 1.0)) {
            throw DomainError("encoder: mask_prob must be in (0, 1)");
        }
        if (mask_span < 1) throw DomainError("encoder: mask_span must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) {
            throw DomainError("encoder: dropout must be in [0, 1)");
        }
    }
};

// Per-frame mask: frame i is masked iff covered by at least one sampled
// span. Spans may overlap and clip at the sequence end.
struct MaskSpec {
    std::vector<std::uint8_t> masked;
    std::vector<std::size_t> span_starts;

    std::size_t n_frames() const { return masked.size(); }

    std::size_t n_masked() const {
        std::size_t n = 0;
        for (auto m : masked) n += m;
        return n;
    }

    std::vector<std::uint32_t> masked_indices() const {
        std::vector<std::uint32_t> idx;
        for (std::size_t i = 0; i < masked.size(); ++i) {
            if (masked[i]) idx.push_back(static_cast<std::uint32_t>(i));
        }
        return idx;
    }

    std::vector<std::uint32_t> unmasked_indices() const {
        std::vector<std::uint32_t> idx;
        for (std::size_t i = 0; i < masked.size(); ++i) {
            if (!masked[i]) idx.push_back(static_cast<std::uint32_t>(i));
        }
        return idx;
    }

    static MaskSpec none(std::size_t n_frames) {
        MaskSpec m;
        m.masked.assign(n_frames, 0);
        return m;
    }
};

inline MaskSpec sample_mask(std::size_t n_frames, const EncoderConfig& cfg, Rng& rng) {
    if (n_frames < 1) throw DomainError("encoder: sample_mask needs n_frames >= 1");
    MaskSpec m;
    m.masked.assign(n_frames, 0);
    for (std::size_t i = 0; i < n_frames; ++i) {
        if (rng.bernoulli(cfg.mask_prob)) m.span_starts.push_back(i);
    }
    for (auto start : m.span_starts) {
        const std::size_t end = std::min(start + cfg.mask_span, n_frames);
        for (std::size_t i = start; i < end; ++i) m.masked[i] = 1;
    }
    return m;
}

template <class T>
struct Linear {
    Tensor<T> weight;  // in x out
    Tensor<T> bias;    // out

    Linear() = default;

    Linear(std::size_t in, std::size_t out, Rng& rng)
        : weight(Tensor<T>::randn({in, out}, rng, static_cast<T>(1.0 / std::sqrt(in)))),
          bias(Tensor<T>::zeros({out}, true)) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }
};

template <class T>
struct TransformerBlock {
    Tensor<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    Linear<T> wq, wk, wv, wo;
    Linear<T> ff1, ff2;
};

namespace detail {

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng* rng) {
    if (rate <= 0.0 || rng == nullptr) return x;
    std::vector<T> keep(x.numel());
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& v : keep) v = rng->uniform() < rate ? T(0) : scale;
    return mul(x, Tensor<T>::from(x.shape(), std::move(keep)));
}

}  // namespace detail

// Sinusoidal positional table for n frames.
template <class T>
Tensor<T> sinusoidal_encoding(std::size_t n_frames, std::size_t d_model) {
    std::vector<T> pe(n_frames * d_model);
    for (std::size_t pos = 0; pos < n_frames; ++pos) {
        for (std::size_t i = 0; i < d_model; i += 2) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
            pe[pos * d_model + i] = static_cast<T>(std::sin(angle));
            if (i + 1 < d_model) pe[pos * d_model + i + 1] = static_cast<T>(std::cos(angle));
        }
    }
    return Tensor<T>::from({n_frames, d_model}, std::move(pe));
}

// Pre-norm transformer encoder over projected feature frames. Masked frames
// are replaced by a learned embedding after the input projection; every
// block output is exposed as a tap, with tap 0 being the transformer input
// (post-masking, before the positional term).
template <class T>
class EncoderModel {
public:
    explicit EncoderModel(EncoderConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        input_proj_ = Linear<T>(cfg_.input_dims, cfg_.d_model, rng);
        mask_embedding_ =
            Tensor<T>::randn({1, cfg_.d_model}, rng, static_cast<T>(0.1));
        blocks_.reserve(cfg_.n_layers);
        for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
            TransformerBlock<T> b;
            b.ln1_gain = Tensor<T>::full({cfg_.d_model}, T(1), true);
            b.ln1_bias = Tensor<T>::zeros({cfg_.d_model}, true);
            b.ln2_gain = Tensor<T>::full({cfg_.d_model}, T(1), true);
            b.ln2_bias = Tensor<T>::zeros({cfg_.d_model}, true);
            b.wq = Linear<T>(cfg_.d_model, cfg_.d_model, rng);
            b.wk = Linear<T>(cfg_.d_model, cfg_.d_model, rng);
            b.wv = Linear<T>(cfg_.d_model, cfg_.d_model, rng);
            b.wo = Linear<T>(cfg_.d_model, cfg_.d_model, rng);
            b.ff1 = Linear<T>(cfg_.d_model, cfg_.d_ff, rng);
            b.ff2 = Linear<T>(cfg_.d_ff, cfg_.d_model, rng);
            blocks_.push_back(std::move(b));
        }
    }

    const EncoderConfig& config() const { return cfg_; }
    Tensor<T>& mask_embedding() { return mask_embedding_; }
    const Tensor<T>& mask_embedding() const { return mask_embedding_; }

    std::vector<std::pair<std::string, Tensor<T>>> named_params() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        out.emplace_back("input_proj.weight", input_proj_.weight);
        out.emplace_back("input_proj.bias", input_proj_.bias);
        out.emplace_back("mask_embedding", mask_embedding_);
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const std::string p = "block" + std::to_string(l) + ".";
            const auto& b = blocks_[l];
            out.emplace_back(p + "ln1.gain", b.ln1_gain);
            out.emplace_back(p + "ln1.bias", b.ln1_bias);
            out.emplace_back(p + "wq.weight", b.wq.weight);
            out.emplace_back(p + "wq.bias", b.wq.bias);
            out.emplace_back(p + "wk.weight", b.wk.weight);
            out.emplace_back(p + "wk.bias", b.wk.bias);
            out.emplace_back(p + "wv.weight", b.wv.weight);
            out.emplace_back(p + "wv.bias", b.wv.bias);
            out.emplace_back(p + "wo.weight", b.wo.weight);
            out.emplace_back(p + "wo.bias", b.wo.bias);
            out.emplace_back(p + "ln2.gain", b.ln2_gain);
            out.emplace_back(p + "ln2.bias", b.ln2_bias);
            out.emplace_back(p + "ff1.weight", b.ff1.weight);
            out.emplace_back(p + "ff1.bias", b.ff1.bias);
            out.emplace_back(p + "ff2.weight", b.ff2.weight);
            out.emplace_back(p + "ff2.bias", b.ff2.bias);
        }
        return out;
    }

    std::vector<Tensor<T>> params() const {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

    // All layer taps 0..n_layers for one utterance. `dropout_rng` enables
    // the training preset; leave null for deterministic inference.
    std::vector<Tensor<T>> forward(const Tensor<T>& features, const MaskSpec& mask,
                                   Rng* dropout_rng = nullptr) const {
        if (features.shape().size() != 2 || features.cols() != cfg_.input_dims) {
            throw DomainError("encoder: feature dims " + shape_str(features.shape()) +
                              " do not match input_dims " + std::to_string(cfg_.input_dims));
        }
        const std::size_t frames = features.rows();
        if (mask.n_frames() != frames) {
            throw DomainError("encoder: mask length does not match frame count");
        }

        Tensor<T> x = input_proj_(features);

        // Masked rows swap to the learned embedding:
        //   x' = x .* keep_rows + mask_col * emb_row
        std::vector<T> keep(frames * cfg_.d_model), mask_col(frames);
        for (std::size_t i = 0; i < frames; ++i) {
            const T keep_v = mask.masked[i] ? T(0) : T(1);
            mask_col[i] = mask.masked[i] ? T(1) : T(0);
            for (std::size_t c = 0; c < cfg_.d_model; ++c) keep[i * cfg_.d_model + c] = keep_v;
        }
        x = add(mul(x, Tensor<T>::from({frames, cfg_.d_model}, std::move(keep))),
                matmul(Tensor<T>::from({frames, 1}, std::move(mask_col)), mask_embedding_));

        std::vector<Tensor<T>> taps;
        taps.reserve(cfg_.n_layers + 1);
        taps.push_back(x);

        Tensor<T> h = cfg_.sinusoidal_pos
                          ? add(x, sinusoidal_encoding<T>(frames, cfg_.d_model))
                          : x;

        const std::size_t dh = cfg_.d_model / cfg_.n_heads;
        const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (const auto& b : blocks_) {
            Tensor<T> a = layer_norm(h, b.ln1_gain, b.ln1_bias);
            Tensor<T> q = b.wq(a), k = b.wk(a), v = b.wv(a);
            std::vector<Tensor<T>> heads;
            heads.reserve(cfg_.n_heads);
            for (std::size_t hd = 0; hd < cfg_.n_heads; ++hd) {
                const std::size_t c0 = hd * dh, c1 = c0 + dh;
                Tensor<T> qi = slice(q, 0, frames, c0, c1);
                Tensor<T> ki = slice(k, 0, frames, c0, c1);
                Tensor<T> vi = slice(v, 0, frames, c0, c1);
                Tensor<T> att = softmax(scale(matmul(qi, transpose(ki)), att_scale));
                heads.push_back(matmul(att, vi));
            }
            Tensor<T> attn_out = b.wo(concat(heads, 1));
            h = add(h, detail::dropout(attn_out, cfg_.dropout, dropout_rng));
            Tensor<T> f = layer_norm(h, b.ln2_gain, b.ln2_bias);
            Tensor<T> ff_out = b.ff2(gelu(b.ff1(f)));
            h = add(h, detail::dropout(ff_out, cfg_.dropout, dropout_rng));
            taps.push_back(h);
        }
        return taps;
    }

    std::vector<Tensor<T>> forward(const FeatureSequence& features, const MaskSpec& mask,
                                   Rng* dropout_rng = nullptr) const {
        return forward(to_tensor(features), mask, dropout_rng);
    }

    static Tensor<T> to_tensor(const FeatureSequence& f) {
        std::vector<T> data(f.data.size());
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(f.data[i]);
        return Tensor<T>::from({f.frames, f.dims}, std::move(data));
    }

private:
    EncoderConfig cfg_;
    Linear<T> input_proj_;
    Tensor<T> mask_embedding_;  // 1 x d_model
    std::vector<TransformerBlock<T>> blocks_;
};

// Unmasked forward over a corpus, returning one layer's activations per
// utterance. The model is frozen, so utterances fan out across threads.
template <class T>
std::vector<FeatureSequence> extract_layer_features(const EncoderModel<T>& model,
                                                    const std::vector<FeatureSequence>& corpus,
                                                    std::size_t layer) {
    if (layer > model.config().n_layers) {
        throw DomainError("encoder: layer " + std::to_string(layer) + " out of range [0, " +
                          std::to_string(model.config().n_layers) + "]");
    }
    std::vector<FeatureSequence> out(corpus.size());
    parallel_for(corpus.size(), [&](std::size_t u) {
        const auto taps = model.forward(corpus[u], MaskSpec::none(corpus[u].frames));
        const Tensor<T>& tap = taps[layer];
        FeatureSequence f;
        f.frames = tap.rows();
        f.dims = tap.cols();
        f.frame_rate = corpus[u].frame_rate;
        f.kind = FeatureKind::layer;
        f.data.resize(f.frames * f.dims);
        auto vals = tap.values();
        for (std::size_t i = 0; i < f.data.size(); ++i)
            f.data[i] = static_cast<float>(vals[i]);
        out[u] = std::move(f);
    });
    return out;
}

}  // namespace masklab

#endif  // MASKLAB_ENCODER_HPP
