#include "ralbench/select.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace ralbench {

ProjectionModel::ProjectionModel(std::size_t dimension, double margin)
    : dim_in_(dimension), dim_out_(dimension), margin_(margin) {
    if (dimension == 0) throw Error("projection model: dimension must be positive");
    if (!(margin > 0.0)) throw Error("projection model: margin must be positive");
    weights_.assign(dim_out_ * dim_in_, 0.0);
    bias_.assign(dim_out_, 0.0);
    for (std::size_t i = 0; i < dimension; ++i) weight(i, i) = 1.0;
}

std::vector<double> ProjectionModel::project(std::span<const double> x) const {
    if (x.size() != dim_in_) throw Error("projection model: dimension mismatch");
    std::vector<double> out(dim_out_, 0.0);
    for (std::size_t r = 0; r < dim_out_; ++r) {
        double acc = bias_[r];
        const double* w = weights_.data() + r * dim_in_;
        for (std::size_t c = 0; c < dim_in_; ++c) acc += w[c] * x[c];
        out[r] = acc;
    }
    return out;
}

void ProjectionModel::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["dim_in"] = dim_in_;
    j["dim_out"] = dim_out_;
    j["margin"] = margin_;
    j["weights"] = weights_;
    j["bias"] = bias_;
    j["provider_id"] = provider_id_;
    atomic_write_file(path, j.dump());
}

ProjectionModel ProjectionModel::load(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(read_file(path));
    ProjectionModel m;
    m.dim_in_ = j.at("dim_in").get<std::size_t>();
    m.dim_out_ = j.at("dim_out").get<std::size_t>();
    m.margin_ = j.at("margin").get<double>();
    m.weights_ = j.at("weights").get<std::vector<double>>();
    m.bias_ = j.at("bias").get<std::vector<double>>();
    m.provider_id_ = j.at("provider_id").get<std::string>();
    if (m.weights_.size() != m.dim_in_ * m.dim_out_ || m.bias_.size() != m.dim_out_) {
        throw Error("projection model file is inconsistent: " + path.string());
    }
    for (double w : m.weights_) {
        if (!std::isfinite(w)) throw Error("projection model has non-finite weights");
    }
    for (double b : m.bias_) {
        if (!std::isfinite(b)) throw Error("projection model has non-finite bias");
    }
    return m;
}

TripletBuildResult build_triplets(const Corpus& corpus, EmbeddingProvider& provider,
                                  std::size_t negatives_per_anchor, std::uint64_t seed,
                                  EmbeddingCache* cache) {
    if (corpus.entries.size() < 2) {
        throw Error("build_triplets: corpus needs at least 2 instances (no negative exists)");
    }
    if (negatives_per_anchor == 0) throw Error("build_triplets: negatives_per_anchor must be >= 1");

    std::vector<std::string> keys;
    keys.reserve(corpus.entries.size());
    for (const auto& e : corpus.entries) keys.push_back(e.key);
    const auto embeddings = cache ? cache->embed_cached(provider, keys) : provider.embed(keys);

    Rng rng(seed);
    TripletBuildResult result;
    const auto n = corpus.entries.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < negatives_per_anchor; ++s) {
            // Uniform over the other instances: draw from [0, n-1) and skip i.
            auto j = static_cast<std::size_t>(rng.uniform_below(n - 1));
            if (j >= i) ++j;
            Triplet t;
            t.anchor = embeddings[i];
            t.positive = embeddings[i];  // the instance is its own positive
            t.negative = embeddings[j];
            result.triplets.push_back(std::move(t));
            result.ids.push_back({corpus.entries[i].id, corpus.entries[j].id});
        }
    }
    return result;
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

double triplet_loss(const ProjectionModel& model, const Triplet& triplet) {
    const auto a = model.project(triplet.anchor);
    const auto p = model.project(triplet.positive);
    const auto n = model.project(triplet.negative);
    const double value = distance(a, p) - distance(a, n) + model.margin();
    return value > 0.0 ? value : 0.0;
}

double mean_triplet_loss(const ProjectionModel& model, const std::vector<Triplet>& triplets) {
    if (triplets.empty()) throw Error("mean_triplet_loss: empty triplet list");
    double sum = 0.0;
    for (const auto& t : triplets) sum += triplet_loss(model, t);
    return sum / static_cast<double>(triplets.size());
}

TripletGradient triplet_gradient(const ProjectionModel& model, const Triplet& triplet) {
    const auto dim_in = model.dim_in();
    const auto dim_out = model.dim_out();
    TripletGradient grad;
    grad.d_weights.assign(dim_out * dim_in, 0.0);
    grad.d_bias.assign(dim_out, 0.0);

    if (triplet_loss(model, triplet) <= 0.0) return grad;  // inactive hinge

    const auto a = model.project(triplet.anchor);
    const auto p = model.project(triplet.positive);
    const auto n = model.project(triplet.negative);

    // u = Pa - Pp, v = Pa - Pn; dL/dPa = u/|u| - v/|v|, dL/dPp = -u/|u|,
    // dL/dPn = v/|v|. Bias cancels out of both differences, so d_bias stays 0.
    std::vector<double> du(dim_out, 0.0);
    std::vector<double> dv(dim_out, 0.0);
    double nu = 0.0, nv = 0.0;
    for (std::size_t r = 0; r < dim_out; ++r) {
        du[r] = a[r] - p[r];
        dv[r] = a[r] - n[r];
        nu += du[r] * du[r];
        nv += dv[r] * dv[r];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    for (std::size_t r = 0; r < dim_out; ++r) {
        du[r] = nu > 0.0 ? du[r] / nu : 0.0;  // zero-distance kink: subgradient 0
        dv[r] = nv > 0.0 ? dv[r] / nv : 0.0;
    }

    // dL/dW = du (a - p)^T - dv (a - n)^T, accumulated row by row.
    for (std::size_t r = 0; r < dim_out; ++r) {
        double* row = grad.d_weights.data() + r * dim_in;
        for (std::size_t c = 0; c < dim_in; ++c) {
            row[c] = du[r] * (triplet.anchor[c] - triplet.positive[c]) -
                     dv[r] * (triplet.anchor[c] - triplet.negative[c]);
        }
    }
    return grad;
}

TrainResult train(const std::vector<Triplet>& triplets, const TrainConfig& config,
                  std::size_t dimension) {
    if (triplets.empty()) throw Error("train: empty triplet list");
    for (const auto& t : triplets) {
        if (t.anchor.size() != dimension || t.positive.size() != dimension ||
            t.negative.size() != dimension) {
            throw Error("train: triplet dimension mismatch");
        }
    }

    TrainResult result;
    result.model = ProjectionModel(dimension, config.margin);
    result.loss_trace.push_back(mean_triplet_loss(result.model, triplets));

    Rng rng(config.seed);
    std::vector<std::size_t> order(triplets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const auto end = std::min(order.size(), start + config.batch_size);
            const auto count = static_cast<double>(end - start);

            std::vector<double> dW(dimension * dimension, 0.0);
            for (std::size_t i = start; i < end; ++i) {
                const auto g = triplet_gradient(result.model, triplets[order[i]]);
                for (std::size_t w = 0; w < dW.size(); ++w) dW[w] += g.d_weights[w];
            }
            const double step = config.learning_rate / count;
            for (std::size_t r = 0; r < dimension; ++r) {
                for (std::size_t c = 0; c < dimension; ++c) {
                    result.model.weight(r, c) -= step * dW[r * dimension + c];
                }
            }
        }
        const double loss = mean_triplet_loss(result.model, triplets);
        if (!std::isfinite(loss)) {
            throw Error("train: non-finite loss after epoch " + std::to_string(epoch + 1) +
                        " (divergence)");
        }
        result.loss_trace.push_back(loss);
    }
    return result;
}

std::vector<ScoredDoc> select_examples(const ProjectionModel& model, EmbeddingProvider& provider,
                                       const std::string& input_key, const Corpus& corpus,
                                       std::size_t k, EmbeddingCache* cache) {
    if (corpus.entries.empty()) return {};
    std::vector<std::string> texts;
    texts.reserve(corpus.entries.size() + 1);
    texts.push_back(input_key);
    for (const auto& e : corpus.entries) texts.push_back(e.key);
    const auto embeddings = cache ? cache->embed_cached(provider, texts) : provider.embed(texts);

    const auto query = model.project(embeddings[0]);
    std::vector<ScoredDoc> hits;
    hits.reserve(corpus.entries.size());
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto projected = model.project(embeddings[i + 1]);
        hits.push_back({corpus.entries[i].id, -distance(query, projected), 0});
    }
    return finalize_hits(std::move(hits), k);
}

SelectorRetriever::SelectorRetriever(const Corpus& corpus,
                                     std::shared_ptr<EmbeddingProvider> provider,
                                     ProjectionModel model, std::shared_ptr<EmbeddingCache> cache)
    : provider_(std::move(provider)), cache_(std::move(cache)), model_(std::move(model)) {
    std::vector<std::string> keys;
    for (const auto& e : corpus.entries) {
        ids_.push_back(e.id);
        keys.push_back(e.key);
    }
    const auto embeddings =
        cache_ ? cache_->embed_cached(*provider_, keys) : provider_->embed(keys);
    projected_.reserve(embeddings.size());
    for (const auto& v : embeddings) projected_.push_back(model_.project(v));
}

std::string SelectorRetriever::describe() const {
    return "selector:" + provider_->id();
}

std::vector<ScoredDoc> SelectorRetriever::query(const std::string& text, std::size_t k) const {
    const std::vector<std::string> texts{text};
    auto embeddings = cache_ ? cache_->embed_cached(*provider_, texts) : provider_->embed(texts);
    const auto query = model_.project(embeddings[0]);
    std::vector<ScoredDoc> hits;
    hits.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        hits.push_back({ids_[i], -distance(query, projected_[i]), 0});
    }
    return finalize_hits(std::move(hits), k);
}

}  // namespace ralbench
