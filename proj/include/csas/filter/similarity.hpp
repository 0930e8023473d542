#pragma once

// Exact cosine-similarity search over item embeddings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csas/error.hpp"
#include "csas/types.hpp"

namespace csas::filter {

using Embedding = std::vector<double>;

inline constexpr double kDefaultSimilarityThreshold = 0.90;
inline constexpr std::size_t kDefaultNeighborCount = 5;

namespace detail {

inline double norm(std::span<const double> v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    return std::sqrt(ss);
}

inline double cosine_with_norms(std::span<const double> a, double norm_a, std::span<const double> b,
                                double norm_b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return std::clamp(dot / (norm_a * norm_b), -1.0, 1.0);
}

}  // namespace detail

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ValidationError("embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    }
    const double na = detail::norm(a);
    const double nb = detail::norm(b);
    if (!(na > 0.0) || !(nb > 0.0) || !std::isfinite(na) || !std::isfinite(nb)) {
        throw DegenerateVectorError("cosine similarity undefined for a zero or non-finite vector");
    }
    return detail::cosine_with_norms(a, na, b, nb);
}

struct Neighbor {
    ItemId item_id;
    double similarity = 0.0;
};

class EmbeddingIndex {
public:
    struct Entry {
        ItemId item_id;
        std::int64_t created_seq = 0;
        Embedding vector;
        double norm = 0.0;
    };

    void insert(ItemId id, std::int64_t created_seq, Embedding vector) {
        if (!entries_.empty() && vector.size() != entries_.front().vector.size()) {
            throw ValidationError("embedding dimension " + std::to_string(vector.size()) +
                                  " does not match index dimension " +
                                  std::to_string(entries_.front().vector.size()));
        }
        const double n = detail::norm(vector);
        if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateVectorError("cannot index a zero vector");
        erase(id);
        entries_.push_back({id, created_seq, std::move(vector), n});
    }

    void erase(ItemId id) {
        std::erase_if(entries_, [id](const Entry& e) { return e.item_id == id; });
    }

    bool contains(ItemId id) const {
        return std::any_of(entries_.begin(), entries_.end(), [id](const Entry& e) { return e.item_id == id; });
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

private:
    std::vector<Entry> entries_;
};

// Top `count` entries by cosine similarity, descending; ties go to the entry
// created first.
inline std::vector<Neighbor> nearest_neighbors(const EmbeddingIndex& index, std::span<const double> query,
                                               std::size_t count = kDefaultNeighborCount) {
    if (index.empty() || count == 0) return {};
    const double nq = detail::norm(query);
    if (!(nq > 0.0) || !std::isfinite(nq)) throw DegenerateVectorError("query embedding is a zero vector");

    struct Scored {
        double similarity;
        std::int64_t created_seq;
        ItemId id;
    };
    std::vector<Scored> scored;
    scored.reserve(index.size());
    for (const auto& e : index.entries()) {
        if (e.vector.size() != query.size()) {
            throw ValidationError("query dimension " + std::to_string(query.size()) +
                                  " does not match index dimension " + std::to_string(e.vector.size()));
        }
        scored.push_back({detail::cosine_with_norms(query, nq, e.vector, e.norm), e.created_seq, e.item_id});
    }
    const auto better = [](const Scored& a, const Scored& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.created_seq < b.created_seq;
    };
    const std::size_t keep = std::min(count, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);

    std::vector<Neighbor> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back({scored[i].id, scored[i].similarity});
    return out;
}

struct RedundancyResult {
    bool passed = true;
    std::vector<Neighbor> nearest;
};

// Fails only when some neighbor is strictly above the threshold.
inline RedundancyResult redundancy_check(const EmbeddingIndex& index, std::span<const double> candidate,
                                         double threshold = kDefaultSimilarityThreshold,
                                         std::size_t count = kDefaultNeighborCount) {
    if (!(threshold > 0.0) || threshold > 1.0) {
        throw ConfigError("similarity threshold must lie in (0, 1]");
    }
    RedundancyResult result;
    result.nearest = nearest_neighbors(index, candidate, count);
    result.passed = result.nearest.empty() || !(result.nearest.front().similarity > threshold);
    return result;
}

}  // namespace csas::filter
