#include "masklab/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "masklab/error.hpp"
#include "masklab/parallel.hpp"
#include "masklab/rng.hpp"

namespace masklab {

namespace {

constexpr std::size_t kAutoMinibatchK = 5000;
constexpr std::size_t kAutoMinibatchSize = 10000;

double sq_dist(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

// Transformed copy of the input in double precision (identity when the
// config does not standardize).
struct Workspace {
    std::vector<double> points;  // n x d
    std::vector<double> mean, scale;
    std::size_t n = 0, d = 0;

    const double* row(std::size_t i) const { return points.data() + i * d; }
};

Workspace prepare(std::span<const float> raw, std::size_t n, std::size_t d, bool standardize) {
    Workspace ws;
    ws.n = n;
    ws.d = d;
    ws.points.resize(n * d);
    for (std::size_t i = 0; i < n * d; ++i) {
        const double v = static_cast<double>(raw[i]);
        if (!std::isfinite(v)) throw NumericError("kmeans: non-finite input point");
        ws.points[i] = v;
    }
    if (!standardize) return ws;
    ws.mean.assign(d, 0.0);
    ws.scale.assign(d, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ws.mean[j] += ws.points[i * d + j];
    for (std::size_t j = 0; j < d; ++j) ws.mean[j] /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dx = ws.points[i * d + j] - ws.mean[j];
            var[j] += dx * dx;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        ws.scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            ws.points[i * d + j] = (ws.points[i * d + j] - ws.mean[j]) * ws.scale[j];
    return ws;
}

std::vector<double> init_centroids(const Workspace& ws, const KmeansConfig& cfg,
                                   std::size_t k, Rng& rng) {
    std::vector<double> centroids(k * ws.d);
    if (cfg.init == KmeansInit::random) {
        // Partial Fisher-Yates draw of k distinct indices.
        std::vector<std::size_t> idx(ws.n);
        for (std::size_t i = 0; i < ws.n; ++i) idx[i] = i;
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t pick = j + rng.uniform_int(ws.n - j);
            std::swap(idx[j], idx[pick]);
            std::copy_n(ws.row(idx[j]), ws.d, centroids.data() + j * ws.d);
        }
        return centroids;
    }
    // k-means++: first centroid uniform, the rest proportional to the
    // squared distance to the nearest chosen centroid.
    std::vector<double> d2(ws.n, std::numeric_limits<double>::infinity());
    const std::size_t first = rng.uniform_int(ws.n);
    std::copy_n(ws.row(first), ws.d, centroids.data());
    for (std::size_t j = 1; j < k; ++j) {
        const double* last = centroids.data() + (j - 1) * ws.d;
        double total = 0.0;
        for (std::size_t i = 0; i < ws.n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(ws.row(i), last, ws.d));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = ws.n - 1;
            for (std::size_t i = 0; i < ws.n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(ws.n);  // all points coincide with chosen centroids
        }
        std::copy_n(ws.row(pick), ws.d, centroids.data() + j * ws.d);
    }
    return centroids;
}

// One assignment pass; returns the objective. Parallel over points, each
// writing only its own slot.
double assign_pass(const Workspace& ws, const std::vector<double>& centroids, std::size_t k,
                   std::vector<std::uint32_t>& labels, std::vector<double>& dists) {
    labels.resize(ws.n);
    dists.resize(ws.n);
    parallel_for(ws.n, [&](std::size_t i) {
        const double* x = ws.row(i);
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double dist = sq_dist(x, centroids.data() + j * ws.d, ws.d);
            if (dist < best) {
                best = dist;
                arg = static_cast<std::uint32_t>(j);
            }
        }
        labels[i] = arg;
        dists[i] = best;
    });
    double obj = 0.0;
    for (double v : dists) obj += v;
    return obj;
}

struct LloydResult {
    std::vector<double> centroids;
    double inertia = 0.0;
    std::vector<double> history;
    std::size_t iterations = 0;
};

LloydResult lloyd(const Workspace& ws, const KmeansConfig& cfg, std::size_t k, Rng& rng) {
    LloydResult res;
    res.centroids = init_centroids(ws, cfg, k, rng);
    std::vector<std::uint32_t> labels;
    std::vector<double> dists;
    std::vector<double> sums(k * ws.d);
    std::vector<std::size_t> counts(k);

    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        const double obj = assign_pass(ws, res.centroids, k, labels, dists);
        res.history.push_back(obj);
        res.iterations = iter + 1;
        if (iter > 0) {
            const double improve = prev - obj;
            if (improve <= cfg.tol * std::max(prev, 1e-300)) break;
        }
        prev = obj;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < ws.n; ++i) {
            const std::uint32_t c = labels[i];
            const double* x = ws.row(i);
            double* s = sums.data() + static_cast<std::size_t>(c) * ws.d;
            for (std::size_t j = 0; j < ws.d; ++j) s[j] += x[j];
            ++counts[c];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t j = 0; j < ws.d; ++j)
                res.centroids[c * ws.d + j] = sums[c * ws.d + j] * inv;
        }

        // Empty-cluster repair: hand each empty centroid the point farthest
        // from its own centroid, without reusing a point twice.
        std::vector<std::size_t> taken;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            double far_dist = -1.0;
            std::size_t far_idx = 0;
            for (std::size_t i = 0; i < ws.n; ++i) {
                if (std::find(taken.begin(), taken.end(), i) != taken.end()) continue;
                if (dists[i] > far_dist) {
                    far_dist = dists[i];
                    far_idx = i;
                }
            }
            std::copy_n(ws.row(far_idx), ws.d, res.centroids.data() + c * ws.d);
            taken.push_back(far_idx);
        }
    }
    res.inertia = res.history.back();
    return res;
}

LloydResult sculley_minibatch(const Workspace& ws, const KmeansConfig& cfg, std::size_t k,
                              std::size_t batch, Rng& rng) {
    LloydResult res;
    res.centroids = init_centroids(ws, cfg, k, rng);
    std::vector<std::size_t> usage(k, 0);
    std::vector<std::size_t> members(batch);
    batch = std::min(batch, ws.n);

    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        for (std::size_t b = 0; b < batch; ++b) members[b] = rng.uniform_int(ws.n);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* x = ws.row(members[b]);
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t j = 0; j < k; ++j) {
                const double dist = sq_dist(x, res.centroids.data() + j * ws.d, ws.d);
                if (dist < best) {
                    best = dist;
                    arg = j;
                }
            }
            ++usage[arg];
            const double lr = 1.0 / static_cast<double>(usage[arg]);
            double* c = res.centroids.data() + arg * ws.d;
            for (std::size_t j = 0; j < ws.d; ++j) c[j] += lr * (x[j] - c[j]);
        }
        res.iterations = iter + 1;
    }
    std::vector<std::uint32_t> labels;
    std::vector<double> dists;
    res.inertia = assign_pass(ws, res.centroids, k, labels, dists);
    return res;
}

}  // namespace

void KmeansConfig::validate() const {
    if (k < 1) throw DomainError("kmeans: k must be >= 1");
    if (max_iters < 1) throw DomainError("kmeans: max_iters must be >= 1");
    if (tol < 0.0) throw DomainError("kmeans: tol must be >= 0");
    if (restarts < 1) throw DomainError("kmeans: restarts must be >= 1");
    if (minibatch && *minibatch < 1) throw DomainError("kmeans: minibatch size must be >= 1");
}

Codebook kmeans_fit(std::span<const float> points, std::size_t n, std::size_t d,
                    const KmeansConfig& cfg, KmeansStats* stats) {
    cfg.validate();
    if (d < 1) throw DomainError("kmeans: dimension must be >= 1");
    if (points.size() != n * d) throw DomainError("kmeans: buffer size does not match n x d");
    if (n < cfg.k) {
        throw DomainError("kmeans: " + std::to_string(n) + " points cannot fill k=" +
                          std::to_string(cfg.k) + " clusters");
    }

    const Workspace ws = prepare(points, n, d, cfg.standardize);

    std::optional<std::size_t> batch = cfg.minibatch;
    if (!batch && cfg.k >= kAutoMinibatchK) batch = kAutoMinibatchSize;

    LloydResult best;
    bool have = false;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        Rng rng(mix_seed(cfg.seed, r));
        LloydResult run = batch ? sculley_minibatch(ws, cfg, cfg.k, *batch, rng)
                                : lloyd(ws, cfg, cfg.k, rng);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }

    if (stats) {
        stats->objective_history = best.history;
        stats->iterations = best.iterations;
        stats->used_minibatch = batch.has_value();
    }

    Codebook cb;
    cb.k = cfg.k;
    cb.d = d;
    cb.centroids = std::move(best.centroids);
    cb.inertia = best.inertia;
    if (cfg.standardize) {
        cb.dim_mean = ws.mean;
        cb.dim_scale = ws.scale;
    }
    return cb;
}

Codebook kmeans_fit(const std::vector<FeatureSequence>& features, const KmeansConfig& cfg,
                    KmeansStats* stats) {
    if (features.empty()) throw DomainError("kmeans: empty feature list");
    const std::size_t d = features.front().dims;
    std::size_t n = 0;
    for (const auto& f : features) {
        if (f.dims != d) throw DomainError("kmeans: feature dims differ across utterances");
        n += f.frames;
    }
    std::vector<float> flat;
    flat.reserve(n * d);
    for (const auto& f : features) flat.insert(flat.end(), f.data.begin(), f.data.end());
    Codebook cb = kmeans_fit(flat, n, d, cfg, stats);
    cb.source.kind = features.front().kind;
    return cb;
}

std::vector<std::uint32_t> kmeans_assign(std::span<const float> points, std::size_t n,
                                         std::size_t d, const Codebook& codebook) {
    if (d != codebook.d) {
        throw DomainError("kmeans: point dim " + std::to_string(d) +
                          " does not match codebook dim " + std::to_string(codebook.d));
    }
    if (points.size() != n * d) throw DomainError("kmeans: buffer size does not match n x d");
    const bool transform = !codebook.dim_mean.empty();
    std::vector<std::uint32_t> labels(n);
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> buf(d);
        for (std::size_t j = 0; j < d; ++j) {
            double v = static_cast<double>(points[i * d + j]);
            if (transform) v = (v - codebook.dim_mean[j]) * codebook.dim_scale[j];
            buf[j] = v;
        }
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (std::size_t c = 0; c < codebook.k; ++c) {
            const double dist = sq_dist(buf.data(), codebook.row(c), d);
            if (dist < best) {
                best = dist;
                arg = static_cast<std::uint32_t>(c);
            }
        }
        labels[i] = arg;
    });
    return labels;
}

std::vector<std::vector<std::uint32_t>> targets_for_corpus(
    const std::vector<FeatureSequence>& features, const Codebook& codebook) {
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve(features.size());
    for (const auto& f : features) {
        out.push_back(kmeans_assign(f.data, f.frames, f.dims, codebook));
    }
    return out;
}

}  // namespace masklab
