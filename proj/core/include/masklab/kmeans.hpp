#ifndef MASKLAB_KMEANS_HPP
#define MASKLAB_KMEANS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "masklab/dsp.hpp"

namespace masklab {

struct CodebookSource {
    FeatureKind kind = FeatureKind::mfcc;
    std::int32_t layer = -1;      // source encoder layer, -1 for acoustic features
    std::int32_t iteration = 0;   // pipeline iteration the features came from
};

struct Codebook {
    std::vector<double> centroids;  // k x d, row-major
    std::size_t k = 0;
    std::size_t d = 0;
    CodebookSource source;
    double inertia = 0.0;
    // Per-dimension affine transform applied before distance computation;
    // empty means identity. Populated when fit() ran with standardization.
    std::vector<double> dim_mean;
    std::vector<double> dim_scale;

    const double* row(std::size_t j) const { return centroids.data() + j * d; }
};

enum class KmeansInit : std::uint8_t { kmeanspp = 0, random = 1 };

struct KmeansConfig {
    std::size_t k = 100;
    KmeansInit init = KmeansInit::kmeanspp;
    std::size_t max_iters = 20;
    double tol = 1e-4;  // relative objective improvement
    // Full batch when empty. k >= 5000 switches to mini-batch (size 10000)
    // automatically; an explicit value forces the mini-batch path.
    std::optional<std::size_t> minibatch;
    std::uint64_t seed = 0;
    std::size_t restarts = 1;       // best-of-n by final inertia
    bool standardize = false;       // per-dimension standardization before clustering

    void validate() const;
};

struct KmeansStats {
    // Objective after every full-batch assignment pass of the winning
    // restart; the sequence is non-increasing.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
    bool used_minibatch = false;
};

// Lloyd (or Sculley mini-batch) k-means. Distances accumulate in double
// regardless of input width. Empty clusters are repaired by moving the
// centroid to the point farthest from its current centroid.
Codebook kmeans_fit(std::span<const float> points, std::size_t n, std::size_t d,
                    const KmeansConfig& cfg, KmeansStats* stats = nullptr);

Codebook kmeans_fit(const std::vector<FeatureSequence>& features, const KmeansConfig& cfg,
                    KmeansStats* stats = nullptr);

// Index of the nearest centroid under squared Euclidean distance, ties
// broken toward the lowest index.
std::vector<std::uint32_t> kmeans_assign(std::span<const float> points, std::size_t n,
                                         std::size_t d, const Codebook& codebook);

// Per-utterance frame-aligned cluster IDs.
std::vector<std::vector<std::uint32_t>> targets_for_corpus(
    const std::vector<FeatureSequence>& features, const Codebook& codebook);

}  // namespace masklab

#endif  // MASKLAB_KMEANS_HPP
