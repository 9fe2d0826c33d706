#pragma once

#include "ralbench/retrieve.hpp"

namespace ralbench {

struct TripletIds {
    std::string anchor_id;
    std::string negative_id;
};

struct Triplet {
    std::vector<double> anchor;
    std::vector<double> positive;
    std::vector<double> negative;
};

// Linear map over frozen embeddings: project(x) = W x + b. Identity at
// construction, so an untrained model reproduces raw-embedding distances.
class ProjectionModel {
public:
    ProjectionModel() = default;
    ProjectionModel(std::size_t dimension, double margin);

    std::vector<double> project(std::span<const double> x) const;

    std::size_t dim_in() const { return dim_in_; }
    std::size_t dim_out() const { return dim_out_; }
    double margin() const { return margin_; }
    const std::string& provider_id() const { return provider_id_; }
    void set_provider_id(std::string id) { provider_id_ = std::move(id); }

    double& weight(std::size_t row, std::size_t col) { return weights_[row * dim_in_ + col]; }
    double weight(std::size_t row, std::size_t col) const { return weights_[row * dim_in_ + col]; }
    double& bias(std::size_t row) { return bias_[row]; }
    double bias(std::size_t row) const { return bias_[row]; }

    void save(const std::filesystem::path& path) const;
    static ProjectionModel load(const std::filesystem::path& path);

private:
    std::size_t dim_in_ = 0;
    std::size_t dim_out_ = 0;
    double margin_ = 1.0;
    std::vector<double> weights_;  // row-major dim_out_ x dim_in_
    std::vector<double> bias_;
    std::string provider_id_;
};

struct TripletBuildResult {
    std::vector<Triplet> triplets;
    std::vector<TripletIds> ids;  // aligned with triplets
};

// One anchor per corpus instance (the instance is its own positive);
// negatives_per_anchor seeded uniform draws from the other instances.
TripletBuildResult build_triplets(const Corpus& corpus, EmbeddingProvider& provider,
                                  std::size_t negatives_per_anchor, std::uint64_t seed,
                                  EmbeddingCache* cache = nullptr);

// Hinge: max(||P a - P p|| - ||P a - P n|| + margin, 0), Euclidean distances
// in projected space.
double triplet_loss(const ProjectionModel& model, const Triplet& triplet);

double mean_triplet_loss(const ProjectionModel& model, const std::vector<Triplet>& triplets);

struct TripletGradient {
    std::vector<double> d_weights;  // row-major, same shape as the model
    std::vector<double> d_bias;
};

// Subgradient of the hinge; zero at inactive hinges and at zero-distance
// kinks.
TripletGradient triplet_gradient(const ProjectionModel& model, const Triplet& triplet);

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::size_t negatives_per_anchor = 4;
    double margin = 1.0;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ProjectionModel model;
    std::vector<double> loss_trace;  // mean loss before training, then per epoch
};

// Mini-batch gradient descent on the mean hinge loss. Fixed batch order and
// reduction order per seed, so identical config + data give bit-identical
// weights. Aborts on non-finite loss.
TrainResult train(const std::vector<Triplet>& triplets, const TrainConfig& config,
                  std::size_t dimension);

// Rank corpus instances by ascending Euclidean distance to the input in
// projected space. ScoredDoc.score is the negated distance so the shared
// (score desc, id asc) result order applies.
std::vector<ScoredDoc> select_examples(const ProjectionModel& model, EmbeddingProvider& provider,
                                       const std::string& input_key, const Corpus& corpus,
                                       std::size_t k, EmbeddingCache* cache = nullptr);

// Retriever adapter so the selector slots into the pipeline. Corpus
// embeddings are projected once at construction.
class SelectorRetriever final : public Retriever {
public:
    SelectorRetriever(const Corpus& corpus, std::shared_ptr<EmbeddingProvider> provider,
                      ProjectionModel model, std::shared_ptr<EmbeddingCache> cache = nullptr);
    std::string describe() const override;
    std::vector<ScoredDoc> query(const std::string& text, std::size_t k) const override;

private:
    std::shared_ptr<EmbeddingProvider> provider_;
    std::shared_ptr<EmbeddingCache> cache_;
    ProjectionModel model_;
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> projected_;
};

}  // namespace ralbench
