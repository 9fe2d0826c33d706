// Independent reference implementations used to freeze expected values.
// Everything here recomputes results from first principles (full scans, O(n^2)
// pairwise sums, finite differences) without touching the index/metric code
// paths under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ralbench/corpus.hpp"
#include "ralbench/retrieve.hpp"
#include "ralbench/select.hpp"

namespace oracles {

// Okapi BM25 by direct per-document evaluation of the documented formula; no
// inverted index involved.
inline std::vector<ralbench::ScoredDoc> bm25_scan(const ralbench::Corpus& corpus,
                                                  const std::string& query, std::size_t k,
                                                  double k1 = 1.2, double b = 0.75) {
    const auto n_docs = corpus.entries.size();
    std::vector<std::vector<std::string>> docs;
    docs.reserve(n_docs);
    double total_len = 0.0;
    for (const auto& e : corpus.entries) {
        docs.push_back(ralbench::tokenize(e.key));
        total_len += static_cast<double>(docs.back().size());
    }
    const double avgdl = total_len / static_cast<double>(n_docs);

    auto q_terms = ralbench::tokenize(query);
    std::sort(q_terms.begin(), q_terms.end());
    q_terms.erase(std::unique(q_terms.begin(), q_terms.end()), q_terms.end());

    std::vector<ralbench::ScoredDoc> hits;
    for (std::size_t d = 0; d < n_docs; ++d) {
        double score = 0.0;
        for (const auto& term : q_terms) {
            std::size_t df = 0;
            for (const auto& doc : docs) {
                if (std::find(doc.begin(), doc.end(), term) != doc.end()) ++df;
            }
            if (df == 0) continue;
            const double tf = static_cast<double>(
                std::count(docs[d].begin(), docs[d].end(), term));
            if (tf == 0.0) continue;
            const double idf =
                std::log(1.0 + (static_cast<double>(n_docs) - df + 0.5) / (df + 0.5));
            const double dl = static_cast<double>(docs[d].size());
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if (score > 0.0) hits.push_back({corpus.entries[d].id, score, 0});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b2) {
        if (a.score != b2.score) return a.score > b2.score;
        return a.id < b2.id;
    });
    if (hits.size() > k) hits.resize(k);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
    return hits;
}

// Dense retrieval by a plain full scan over freshly computed embeddings.
inline std::vector<ralbench::ScoredDoc> dense_scan(const ralbench::Corpus& corpus,
                                                   ralbench::EmbeddingProvider& provider,
                                                   const std::string& query, std::size_t k,
                                                   bool cosine) {
    std::vector<std::string> texts{query};
    for (const auto& e : corpus.entries) texts.push_back(e.key);
    auto vectors = provider.embed(texts);
    if (cosine) {
        for (auto& v : vectors) ralbench::normalize_in_place(v);
    }
    std::vector<ralbench::ScoredDoc> hits;
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        hits.push_back({corpus.entries[i].id, ralbench::dot(vectors[0], vectors[i + 1]), 0});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (hits.size() > k) hits.resize(k);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
    return hits;
}

// AUROC as the plain pairwise Mann-Whitney statistic.
inline double auroc_pairwise(const std::vector<double>& scores, const std::vector<bool>& labels) {
    double wins = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        ++n_pos;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (bool l : labels) n_neg += l ? 0 : 1;
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// AUPRC by scanning every distinct threshold and accumulating the step areas.
inline double auprc_threshold_scan(const std::vector<double>& scores,
                                   const std::vector<bool>& labels) {
    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::size_t n_pos = 0;
    for (bool l : labels) n_pos += l ? 1 : 0;

    double area = 0.0;
    double prev_recall = 0.0;
    for (double threshold : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= threshold) {
                if (labels[i]) ++tp; else ++fp;
            }
        }
        const double recall = static_cast<double>(tp) / n_pos;
        const double precision = static_cast<double>(tp) / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

// Central finite differences of the triplet loss with respect to every weight
// entry (and bias entry).
struct NumericGradient {
    std::vector<double> d_weights;
    std::vector<double> d_bias;
};

inline NumericGradient finite_difference_gradient(const ralbench::ProjectionModel& model,
                                                  const ralbench::Triplet& triplet,
                                                  double epsilon = 1e-5) {
    NumericGradient grad;
    const auto d_out = model.dim_out();
    const auto d_in = model.dim_in();
    grad.d_weights.assign(d_out * d_in, 0.0);
    grad.d_bias.assign(d_out, 0.0);

    ralbench::ProjectionModel probe = model;
    for (std::size_t r = 0; r < d_out; ++r) {
        for (std::size_t c = 0; c < d_in; ++c) {
            const double saved = probe.weight(r, c);
            probe.weight(r, c) = saved + epsilon;
            const double up = ralbench::triplet_loss(probe, triplet);
            probe.weight(r, c) = saved - epsilon;
            const double down = ralbench::triplet_loss(probe, triplet);
            probe.weight(r, c) = saved;
            grad.d_weights[r * d_in + c] = (up - down) / (2.0 * epsilon);
        }
        const double saved = probe.bias(r);
        probe.bias(r) = saved + epsilon;
        const double up = ralbench::triplet_loss(probe, triplet);
        probe.bias(r) = saved - epsilon;
        const double down = ralbench::triplet_loss(probe, triplet);
        probe.bias(r) = saved;
        grad.d_bias[r] = (up - down) / (2.0 * epsilon);
    }
    return grad;
}

}  // namespace oracles
