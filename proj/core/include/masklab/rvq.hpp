#ifndef MASKLAB_RVQ_HPP
#define MASKLAB_RVQ_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "masklab/corpus.hpp"
#include "masklab/encoder.hpp"
#include "masklab/error.hpp"
#include "masklab/rng.hpp"
#include "masklab/tensor.hpp"

namespace masklab {

struct RvqConfig {
    std::size_t levels = 4;
    std::size_t k1 = 100;      // level-1 codebook; equals the external k when pinned
    std::size_t k_rest = 64;   // levels 2..L
    std::size_t d_input = 40;  // log-mel bands
    std::size_t d_latent = 32;
    std::size_t d_hidden = 64;
    double beta = 0.25;        // commitment weight
    double ema_decay = 0.99;
    double lr = 1e-3;
    bool pinned = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (levels < 1) throw DomainError("rvq: levels must be >= 1");
        if (k1 < 1 || (levels > 1 && k_rest < 1)) {
            throw DomainError("rvq: codebook sizes must be >= 1");
        }
        if (d_input == 0 || d_latent == 0 || d_hidden == 0) {
            throw DomainError("rvq: dimensions must be positive");
        }
        if (!(ema_decay > 0.0 && ema_decay < 1.0)) {
            throw DomainError("rvq: ema_decay must be in (0, 1)");
        }
        if (beta < 0.0) throw DomainError("rvq: beta must be >= 0");
    }
};

template <class T>
struct QuantizeResult {
    std::vector<std::vector<std::uint32_t>> codes;  // levels x frames
    std::vector<double> residual_norms;             // mean ||r|| after each level
    std::vector<T> quantized;                       // frames x d_latent, sum of codes
    // Quantizer input per level (the running residual), kept only when
    // requested; the EMA update consumes it.
    std::vector<std::vector<T>> level_inputs;
};

// Frame-wise residual vector quantizer VAE over log-mel frames. Encoder and
// decoder are two-layer MLPs trained by backprop through the straight-through
// estimator; codebooks update by exponential moving averages. When pinned,
// level-1 code selection is dictated by externally supplied cluster ids and
// no level-1 distance is ever computed.
template <class T>
class RvqModel {
public:
    explicit RvqModel(RvqConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        enc1_ = Linear<T>(cfg_.d_input, cfg_.d_hidden, rng);
        enc2_ = Linear<T>(cfg_.d_hidden, cfg_.d_latent, rng);
        dec1_ = Linear<T>(cfg_.d_latent, cfg_.d_hidden, rng);
        dec2_ = Linear<T>(cfg_.d_hidden, cfg_.d_input, rng);
        codebooks_.resize(cfg_.levels);
        ema_size_.resize(cfg_.levels);
        ema_sum_.resize(cfg_.levels);
        for (std::size_t l = 0; l < cfg_.levels; ++l) {
            const std::size_t k = level_size(l);
            codebooks_[l].resize(k * cfg_.d_latent);
            for (auto& v : codebooks_[l]) v = static_cast<T>(rng.normal() * 0.1);
            ema_size_[l].assign(k, 1.0);
            ema_sum_[l].resize(k * cfg_.d_latent);
            for (std::size_t i = 0; i < ema_sum_[l].size(); ++i) {
                ema_sum_[l][i] = static_cast<double>(codebooks_[l][i]);
            }
        }
    }

    const RvqConfig& config() const { return cfg_; }
    std::size_t levels() const { return cfg_.levels; }

    std::size_t level_size(std::size_t level) const {
        return level == 0 ? cfg_.k1 : cfg_.k_rest;
    }

    const std::vector<T>& codebook(std::size_t level) const { return codebooks_.at(level); }
    std::vector<T>& codebook_mut(std::size_t level) { return codebooks_.at(level); }

    std::uint64_t level1_distance_evals() const { return level1_distance_evals_; }
    void reset_probe_counters() { level1_distance_evals_ = 0; }

    std::vector<std::pair<std::string, Tensor<T>>> named_params() const {
        return {{"enc1.weight", enc1_.weight}, {"enc1.bias", enc1_.bias},
                {"enc2.weight", enc2_.weight}, {"enc2.bias", enc2_.bias},
                {"dec1.weight", dec1_.weight}, {"dec1.bias", dec1_.bias},
                {"dec2.weight", dec2_.weight}, {"dec2.bias", dec2_.bias}};
    }

    std::vector<Tensor<T>> params() const {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

    Tensor<T> encode(const Tensor<T>& x) const { return enc2_(gelu(enc1_(x))); }
    Tensor<T> decode(const Tensor<T>& zq) const { return dec2_(gelu(dec1_(zq))); }

    // Greedy per-level code selection. Level 1 takes pinned_ids verbatim in
    // pinned mode (required there, rejected otherwise).
    QuantizeResult<T> quantize(std::span<const T> z, std::size_t frames,
                               const std::vector<std::uint32_t>* pinned_ids = nullptr,
                               bool keep_level_inputs = false) const {
        const std::size_t d = cfg_.d_latent;
        if (z.size() != frames * d) throw DomainError("rvq: latent buffer size mismatch");
        if (cfg_.pinned && pinned_ids == nullptr) {
            throw DomainError("rvq: pinned model requires pinned_ids");
        }
        if (!cfg_.pinned && pinned_ids != nullptr) {
            throw DomainError("rvq: pinned_ids supplied to an unpinned model");
        }
        if (pinned_ids && pinned_ids->size() != frames) {
            throw DomainError("rvq: pinned_ids length does not match frames");
        }

        QuantizeResult<T> res;
        res.codes.assign(cfg_.levels, std::vector<std::uint32_t>(frames));
        res.residual_norms.assign(cfg_.levels, 0.0);
        std::vector<T> residual(z.begin(), z.end());
        if (keep_level_inputs) res.level_inputs.resize(cfg_.levels);

        for (std::size_t l = 0; l < cfg_.levels; ++l) {
            if (keep_level_inputs) res.level_inputs[l] = residual;
            const std::vector<T>& cb = codebooks_[l];
            const std::size_t k = level_size(l);
            double norm_acc = 0.0;
            for (std::size_t f = 0; f < frames; ++f) {
                T* r = residual.data() + f * d;
                std::uint32_t code;
                if (l == 0 && cfg_.pinned) {
                    code = (*pinned_ids)[f];
                    if (code >= k) {
                        throw DomainError("rvq: pinned id " + std::to_string(code) +
                                          " out of range [0," + std::to_string(k) + ")");
                    }
                } else {
                    double best = std::numeric_limits<double>::infinity();
                    std::uint32_t arg = 0;
                    for (std::size_t c = 0; c < k; ++c) {
                        const T* cv = cb.data() + c * d;
                        double dist = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                            const double diff = static_cast<double>(r[j]) - cv[j];
                            dist += diff * diff;
                        }
                        if (l == 0) ++level1_distance_evals_;
                        if (dist < best) {
                            best = dist;
                            arg = static_cast<std::uint32_t>(c);
                        }
                    }
                    code = arg;
                }
                res.codes[l][f] = code;
                const T* cv = cb.data() + static_cast<std::size_t>(code) * d;
                double norm = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    r[j] -= cv[j];
                    norm += static_cast<double>(r[j]) * r[j];
                }
                norm_acc += std::sqrt(norm);
            }
            res.residual_norms[l] = norm_acc / static_cast<double>(frames);
        }

        res.quantized.resize(frames * d);
        for (std::size_t i = 0; i < res.quantized.size(); ++i) {
            res.quantized[i] = z[i] - residual[i];
        }
        return res;
    }

    // Reconstruction from the first `levels_used` quantization levels.
    double reconstruction_mse(const FeatureSequence& logmel,
                              const std::vector<std::uint32_t>* pinned_ids,
                              std::size_t levels_used) const {
        if (levels_used < 1 || levels_used > cfg_.levels) {
            throw DomainError("rvq: levels_used out of range");
        }
        Tensor<T> x = EncoderModel<T>::to_tensor(logmel);
        Tensor<T> z = encode(x);
        auto q = quantize(z.values(), logmel.frames, pinned_ids);
        std::vector<T> partial(logmel.frames * cfg_.d_latent, T(0));
        for (std::size_t l = 0; l < levels_used; ++l) {
            for (std::size_t f = 0; f < logmel.frames; ++f) {
                const T* cv = codebooks_[l].data() +
                              static_cast<std::size_t>(q.codes[l][f]) * cfg_.d_latent;
                T* p = partial.data() + f * cfg_.d_latent;
                for (std::size_t j = 0; j < cfg_.d_latent; ++j) p[j] += cv[j];
            }
        }
        Tensor<T> xhat = decode(Tensor<T>::from({logmel.frames, cfg_.d_latent}, partial));
        double acc = 0.0;
        auto xv = x.values();
        auto hv = xhat.values();
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double diff = static_cast<double>(hv[i]) - xv[i];
            acc += diff * diff;
        }
        return acc / static_cast<double>(xv.size());
    }

    // EMA codebook update for one level from (input, code) assignments.
    void ema_update(std::size_t level, const std::vector<T>& inputs,
                    const std::vector<std::uint32_t>& codes) {
        const std::size_t d = cfg_.d_latent;
        const std::size_t k = level_size(level);
        const double decay = cfg_.ema_decay;
        std::vector<double> batch_count(k, 0.0);
        std::vector<double> batch_sum(k * d, 0.0);
        for (std::size_t f = 0; f < codes.size(); ++f) {
            const std::uint32_t c = codes[f];
            batch_count[c] += 1.0;
            const T* x = inputs.data() + f * d;
            double* s = batch_sum.data() + static_cast<std::size_t>(c) * d;
            for (std::size_t j = 0; j < d; ++j) s[j] += static_cast<double>(x[j]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            ema_size_[level][c] = decay * ema_size_[level][c] + (1.0 - decay) * batch_count[c];
            for (std::size_t j = 0; j < d; ++j) {
                ema_sum_[level][c * d + j] = decay * ema_sum_[level][c * d + j] +
                                             (1.0 - decay) * batch_sum[c * d + j];
            }
            const double denom = std::max(ema_size_[level][c], 1e-6);
            for (std::size_t j = 0; j < d; ++j) {
                const double v = ema_sum_[level][c * d + j] / denom;
                if (!std::isfinite(v)) throw NumericError("rvq: non-finite EMA codebook");
                codebooks_[level][c * d + j] = static_cast<T>(v);
            }
        }
    }

    // Deterministic dead-code reseed: codes with zero usage jump to the
    // residual of a seeded random frame and restart their EMA state.
    void reseed_dead_codes(std::size_t level, const std::vector<std::size_t>& usage,
                           const std::vector<T>& sample_inputs, Rng& rng) {
        const std::size_t d = cfg_.d_latent;
        const std::size_t frames = sample_inputs.size() / d;
        if (frames == 0) return;
        for (std::size_t c = 0; c < usage.size(); ++c) {
            if (usage[c] != 0) continue;
            const std::size_t f = rng.uniform_int(frames);
            for (std::size_t j = 0; j < d; ++j) {
                const double v = static_cast<double>(sample_inputs[f * d + j]);
                codebooks_[level][c * d + j] = static_cast<T>(v);
                ema_sum_[level][c * d + j] = v;
            }
            ema_size_[level][c] = 1.0;
        }
    }

private:
    RvqConfig cfg_;
    Linear<T> enc1_, enc2_, dec1_, dec2_;
    std::vector<std::vector<T>> codebooks_;      // per level, k x d_latent
    std::vector<std::vector<double>> ema_size_;  // per level, k
    std::vector<std::vector<double>> ema_sum_;   // per level, k x d_latent
    mutable std::uint64_t level1_distance_evals_ = 0;
};

struct RvqTrainStats {
    std::vector<double> train_loss;    // per epoch
    std::vector<double> heldout_mse;   // per epoch, eval-split reconstruction
};

// Offline trainer: one Adam step per utterance, EMA codebook updates from
// the same pass, per-level dead codes reseeded at epoch end. Utterances in
// the eval split (see is_eval_utterance) never train and feed heldout_mse.
template <class T>
RvqTrainStats rvq_train(RvqModel<T>& model, const std::vector<FeatureSequence>& logmel,
                        const std::vector<std::string>& utterance_ids,
                        const std::vector<std::vector<std::uint32_t>>* pinned_ids,
                        std::size_t epochs) {
    const RvqConfig& cfg = model.config();
    if (cfg.pinned && pinned_ids == nullptr) {
        throw DomainError("rvq: pinned training requires kmeans ids");
    }
    if (!cfg.pinned && pinned_ids != nullptr) {
        throw DomainError("rvq: kmeans ids supplied to an unpinned model");
    }
    if (pinned_ids && pinned_ids->size() != logmel.size()) {
        throw DomainError("rvq: kmeans id count does not match corpus");
    }
    if (utterance_ids.size() != logmel.size()) {
        throw DomainError("rvq: utterance id count does not match corpus");
    }

    std::vector<std::size_t> train_idx, eval_idx;
    for (std::size_t u = 0; u < logmel.size(); ++u) {
        (is_eval_utterance(utterance_ids[u]) ? eval_idx : train_idx).push_back(u);
    }
    if (train_idx.empty()) throw DomainError("rvq: empty training split");

    Adam<T> opt(model.params(), static_cast<T>(cfg.lr));
    Rng reseed_rng(mix_seed(cfg.seed, 0x52565144ULL));  // dead-code reseed stream

    RvqTrainStats stats;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::vector<std::vector<std::size_t>> usage(cfg.levels);
        for (std::size_t l = 0; l < cfg.levels; ++l) usage[l].assign(model.level_size(l), 0);
        std::vector<std::vector<T>> last_level_inputs(cfg.levels);

        double loss_acc = 0.0;
        for (std::size_t u : train_idx) {
            const FeatureSequence& f = logmel[u];
            Tensor<T> x = EncoderModel<T>::to_tensor(f);
            Tensor<T> z = model.encode(x);
            const std::vector<std::uint32_t>* ids =
                cfg.pinned ? &(*pinned_ids)[u] : nullptr;
            auto q = model.quantize(z.values(), f.frames, ids, true);

            Tensor<T> zq = straight_through(z, q.quantized);
            Tensor<T> xhat = model.decode(zq);
            Tensor<T> recon = mse_loss(xhat, x);
            Tensor<T> commit =
                mse_loss(z, Tensor<T>::from({f.frames, cfg.d_latent}, q.quantized));
            Tensor<T> loss = add(recon, scale(commit, static_cast<T>(cfg.beta)));

            opt.zero_grad();
            try {
                backward(loss);
            } catch (const NumericError& e) {
                throw NumericError("rvq: training diverged at epoch " +
                                   std::to_string(epoch) + ", utterance " +
                                   utterance_ids[u] + ": " + e.what());
            }
            opt.step();
            loss_acc += static_cast<double>(loss.item());

            for (std::size_t l = 0; l < cfg.levels; ++l) {
                model.ema_update(l, q.level_inputs[l], q.codes[l]);
                for (auto c : q.codes[l]) ++usage[l][c];
                last_level_inputs[l] = q.level_inputs[l];
            }
        }
        for (std::size_t l = 0; l < cfg.levels; ++l) {
            model.reseed_dead_codes(l, usage[l], last_level_inputs[l], reseed_rng);
        }
        stats.train_loss.push_back(loss_acc / static_cast<double>(train_idx.size()));

        double heldout = 0.0;
        for (std::size_t u : eval_idx) {
            const std::vector<std::uint32_t>* ids =
                cfg.pinned ? &(*pinned_ids)[u] : nullptr;
            heldout += model.reconstruction_mse(logmel[u], ids, cfg.levels);
        }
        stats.heldout_mse.push_back(
            eval_idx.empty() ? 0.0 : heldout / static_cast<double>(eval_idx.size()));
    }
    return stats;
}

}  // namespace masklab

#endif  // MASKLAB_RVQ_HPP
