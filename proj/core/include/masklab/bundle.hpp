#ifndef MASKLAB_BUNDLE_HPP
#define MASKLAB_BUNDLE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "masklab/error.hpp"

namespace masklab {

// One stream of per-frame integer prediction targets.
struct TargetStream {
    std::string name;
    std::uint32_t vocab_size = 0;
    std::int32_t layer_or_level = 0;
    std::vector<std::vector<std::uint32_t>> ids;  // per utterance, frame-aligned
};

// Ordered collection of frame-aligned target streams. Layer streams are kept
// in descending layer order (highest first) so conditional prediction heads
// can consume them as-is; RVQ streams ascend by level.
struct TargetBundle {
    std::vector<TargetStream> streams;

    std::size_t n_utterances() const {
        return streams.empty() ? 0 : streams.front().ids.size();
    }

    // Frame alignment and vocabulary bounds across all streams.
    void validate() const {
        if (streams.empty()) return;
        const std::size_t n = streams.front().ids.size();
        for (const auto& s : streams) {
            if (s.vocab_size == 0) throw DomainError("bundle: stream with empty vocabulary");
            if (s.ids.size() != n) {
                throw DomainError("bundle: stream '" + s.name +
                                  "' has mismatched utterance count");
            }
            for (std::size_t u = 0; u < n; ++u) {
                if (s.ids[u].size() != streams.front().ids[u].size()) {
                    throw DomainError("bundle: stream '" + s.name +
                                      "' not frame-aligned at utterance " + std::to_string(u));
                }
                for (auto id : s.ids[u]) {
                    if (id >= s.vocab_size) {
                        throw DomainError("bundle: id out of vocabulary in stream '" + s.name +
                                          "'");
                    }
                }
            }
        }
    }
};

}  // namespace masklab

#endif  // MASKLAB_BUNDLE_HPP
