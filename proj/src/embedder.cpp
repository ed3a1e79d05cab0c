#include "vulnharness/embedder.hpp"

#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "vulnharness/common.hpp"

namespace vulnharness {

namespace {

uint64_t fnv1a(std::string_view text) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '_') {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

HashEmbedder::HashEmbedder(Eigen::Index dimension) : dimension_(dimension) {
    if (dimension <= 0) throw HarnessError(ErrorKind::validation, "embedding dimension must be positive");
}

std::string HashEmbedder::id() const { return "hash-" + std::to_string(dimension_); }

Eigen::VectorXf HashEmbedder::embed(std::string_view text) {
    Eigen::VectorXf v = Eigen::VectorXf::Zero(dimension_);
    const auto w = words(text);
    auto add = [&](std::string_view feature, float weight) {
        const uint64_t h = fnv1a(feature);
        const auto slot = static_cast<Eigen::Index>(h % static_cast<uint64_t>(dimension_));
        v(slot) += (h >> 63) ? -weight : weight;
    };
    for (size_t i = 0; i < w.size(); ++i) {
        add(w[i], 1.0f);
        if (i + 1 < w.size()) add(w[i] + " " + w[i + 1], 0.5f);
    }
    const float norm = v.norm();
    if (norm > 0.0f) v /= norm;
    return v;
}

}  // namespace vulnharness
