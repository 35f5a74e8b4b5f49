#ifndef MASKLAB_HEADS_HPP
#define MASKLAB_HEADS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "masklab/encoder.hpp"
#include "masklab/error.hpp"
#include "masklab/tensor.hpp"

namespace masklab {

enum class HeadMode : std::uint8_t { single = 0, flat = 1, conditional = 2 };

inline const char* head_mode_name(HeadMode m) {
    switch (m) {
        case HeadMode::single: return "single";
        case HeadMode::flat: return "flat";
        case HeadMode::conditional: return "conditional";
    }
    return "?";
}

// Prediction heads over the final encoder state, one linear head per target
// stream. Streams arrive highest layer first (TargetBundle order). In
// conditional mode, the head input for stream s is the final hidden state
// plus the summed ground-truth embeddings of every stream above s; each
// non-lowest stream owns one (vocab x d_model) embedding table.
template <class T>
class HeadStack {
public:
    HeadStack(HeadMode mode, std::size_t d_model, std::vector<std::uint32_t> vocab_sizes,
              Rng& rng)
        : mode_(mode), d_model_(d_model), vocab_sizes_(std::move(vocab_sizes)) {
        if (vocab_sizes_.empty()) throw DomainError("heads: need at least one stream");
        if (mode_ == HeadMode::single && vocab_sizes_.size() != 1) {
            throw DomainError("heads: single mode requires exactly one stream");
        }
        for (auto v : vocab_sizes_) {
            heads_.emplace_back(d_model_, v, rng);
        }
        if (mode_ == HeadMode::conditional) {
            for (std::size_t s = 0; s + 1 < vocab_sizes_.size(); ++s) {
                embeddings_.push_back(Tensor<T>::randn(
                    {vocab_sizes_[s], d_model_}, rng, static_cast<T>(0.02)));
            }
        }
    }

    HeadMode mode() const { return mode_; }
    std::size_t n_streams() const { return vocab_sizes_.size(); }
    const std::vector<std::uint32_t>& vocab_sizes() const { return vocab_sizes_; }
    Linear<T>& head(std::size_t s) { return heads_.at(s); }
    Tensor<T>& embedding(std::size_t s) { return embeddings_.at(s); }

    std::vector<std::pair<std::string, Tensor<T>>> named_params() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t s = 0; s < heads_.size(); ++s) {
            const std::string p = "head" + std::to_string(s) + ".";
            out.emplace_back(p + "weight", heads_[s].weight);
            out.emplace_back(p + "bias", heads_[s].bias);
        }
        for (std::size_t s = 0; s < embeddings_.size(); ++s) {
            out.emplace_back("embed" + std::to_string(s), embeddings_[s]);
        }
        return out;
    }

    std::vector<Tensor<T>> params() const {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

    // Per-stream logits for one utterance. `stream_ids` are the ground-truth
    // ids per stream (teacher forcing); only conditional mode reads them,
    // and only for streams above the one being predicted.
    std::vector<Tensor<T>> predict(
        const Tensor<T>& final_hidden,
        const std::vector<std::vector<std::uint32_t>>& stream_ids) const {
        if (stream_ids.size() != n_streams()) {
            throw DomainError("heads: got " + std::to_string(stream_ids.size()) +
                              " id streams for " + std::to_string(n_streams()) + " heads");
        }
        const std::size_t frames = final_hidden.rows();
        std::vector<Tensor<T>> logits;
        logits.reserve(n_streams());
        for (std::size_t s = 0; s < n_streams(); ++s) {
            Tensor<T> input = final_hidden;
            if (mode_ == HeadMode::conditional) {
                for (std::size_t h = 0; h < s; ++h) {
                    if (stream_ids[h].size() != frames) {
                        throw DomainError(
                            "heads: conditional mode needs ground-truth ids for stream " +
                            std::to_string(h));
                    }
                    input = add(input, embedding_lookup(embeddings_[h], stream_ids[h]));
                }
            }
            logits.push_back(heads_[s](input));
        }
        return logits;
    }

private:
    HeadMode mode_;
    std::size_t d_model_;
    std::vector<std::uint32_t> vocab_sizes_;
    std::vector<Linear<T>> heads_;
    std::vector<Tensor<T>> embeddings_;  // one per non-lowest stream
};

// Mean cross-entropy over masked frames, averaged uniformly over streams
// (or with explicit per-stream weights).
template <class T>
Tensor<T> masked_loss(const std::vector<Tensor<T>>& logits,
                      const std::vector<std::vector<std::uint32_t>>& stream_ids,
                      const MaskSpec& mask, const std::vector<double>& stream_weights = {}) {
    if (logits.empty() || logits.size() != stream_ids.size()) {
        throw DomainError("heads: logits/target stream count mismatch");
    }
    if (!stream_weights.empty() && stream_weights.size() != logits.size()) {
        throw DomainError("heads: stream weight count mismatch");
    }
    const auto masked_idx = mask.masked_indices();
    if (masked_idx.empty()) {
        throw DomainError("heads: mask selects zero frames; resample the mask");
    }
    double total_weight = 0.0;
    Tensor<T> loss;
    for (std::size_t s = 0; s < logits.size(); ++s) {
        if (stream_ids[s].size() != mask.n_frames()) {
            throw DomainError("heads: target stream " + std::to_string(s) +
                              " not frame-aligned with mask");
        }
        std::vector<std::uint32_t> targets(masked_idx.size());
        for (std::size_t i = 0; i < masked_idx.size(); ++i) {
            targets[i] = stream_ids[s][masked_idx[i]];
        }
        Tensor<T> rows = embedding_lookup(logits[s], masked_idx);
        Tensor<T> ce = cross_entropy_loss(rows, targets);
        const double w = stream_weights.empty() ? 1.0 : stream_weights[s];
        total_weight += w;
        Tensor<T> term = scale(ce, static_cast<T>(w));
        loss = s == 0 ? term : add(loss, term);
    }
    return scale(loss, static_cast<T>(1.0 / total_weight));
}

}  // namespace masklab

#endif  // MASKLAB_HEADS_HPP
