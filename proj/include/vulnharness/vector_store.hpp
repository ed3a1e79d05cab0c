#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "vulnharness/common.hpp"

namespace vulnharness {

enum class EmbedMode { code, functionality };

std::string_view to_string(EmbedMode mode);
EmbedMode parse_embed_mode(std::string_view text);

template <typename Scalar>
struct ScoredId {
    std::string id;
    int rank = 0;  // 1-based
    Scalar score{};
};

/// Dense exact-search store: one row per item id, all rows of one embedding mode.
template <typename Scalar>
class BasicVectorStore {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    BasicVectorStore(Eigen::Index dimension, EmbedMode mode) : dimension_(dimension), mode_(mode) {
        if (dimension <= 0)
            throw HarnessError(ErrorKind::validation, "vector store dimension must be positive");
    }

    Eigen::Index dimension() const { return dimension_; }
    EmbedMode mode() const { return mode_; }
    size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    bool contains(const std::string& id) const { return index_.count(id) > 0; }

    auto row(size_t i) const { return rows_.row(static_cast<Eigen::Index>(i)); }
    auto vector_of(const std::string& id) const { return row(index_.at(id)); }

    /// Inserts or replaces the row for `id`.
    void upsert(const std::string& id, const Eigen::Ref<const Vector>& v) {
        if (v.size() != dimension_)
            throw HarnessError(ErrorKind::dimension_mismatch,
                               "vector for " + id + " has length " + std::to_string(v.size()) +
                                   ", store dimension is " + std::to_string(dimension_));
        const auto it = index_.find(id);
        if (it != index_.end()) {
            rows_.row(static_cast<Eigen::Index>(it->second)) = v.transpose();
            return;
        }
        const auto n = static_cast<Eigen::Index>(ids_.size());
        if (n == rows_.rows()) rows_.conservativeResize(std::max<Eigen::Index>(8, 2 * n), dimension_);
        rows_.row(n) = v.transpose();
        index_.emplace(id, ids_.size());
        ids_.push_back(id);
    }

    /// Dot product of `query` with every stored row, in insertion order.
    Vector scores(const Eigen::Ref<const Vector>& query) const {
        check_query(query);
        return rows_.topRows(static_cast<Eigen::Index>(ids_.size())) * query;
    }

    /// Exact top-k by dot product; ties go to the lexicographically smaller id.
    std::vector<ScoredId<Scalar>> top_k(const Eigen::Ref<const Vector>& query, size_t k) const {
        if (k == 0) throw HarnessError(ErrorKind::validation, "k must be at least 1");
        const Vector s = scores(query);
        std::vector<size_t> order(ids_.size());
        std::iota(order.begin(), order.end(), size_t{0});
        const size_t take = std::min(k, order.size());
        auto better = [&](size_t a, size_t b) {
            const auto sa = s(static_cast<Eigen::Index>(a));
            const auto sb = s(static_cast<Eigen::Index>(b));
            if (sa != sb) return sa > sb;
            return ids_[a] < ids_[b];
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                          order.end(), better);
        std::vector<ScoredId<Scalar>> out;
        out.reserve(take);
        for (size_t r = 0; r < take; ++r)
            out.push_back({ids_[order[r]], static_cast<int>(r + 1), s(static_cast<Eigen::Index>(order[r]))});
        return out;
    }

private:
    void check_query(const Eigen::Ref<const Vector>& query) const {
        if (query.size() != dimension_)
            throw HarnessError(ErrorKind::dimension_mismatch,
                               "query has length " + std::to_string(query.size()) +
                                   ", store dimension is " + std::to_string(dimension_));
    }

    Eigen::Index dimension_;
    EmbedMode mode_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, size_t> index_;
    Matrix rows_{0, 0};
};

using VectorStore = BasicVectorStore<float>;

}  // namespace vulnharness
