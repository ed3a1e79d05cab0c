#pragma once

#include <string>
#include <string_view>

#include <Eigen/Core>

namespace vulnharness {

/// Text to fixed-dimension vector. Implementations must be deterministic for a given id.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual Eigen::Index dimension() const = 0;
    virtual Eigen::VectorXf embed(std::string_view text) = 0;
};

/// Offline embedder: signed feature hashing of lowercased word unigrams and bigrams,
/// L2-normalized. Texts sharing vocabulary land close together, which is enough to
/// exercise retrieval without a network.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(Eigen::Index dimension = 256);
    std::string id() const override;
    Eigen::Index dimension() const override { return dimension_; }
    Eigen::VectorXf embed(std::string_view text) override;

private:
    Eigen::Index dimension_;
};

}  // namespace vulnharness
