#include "ralbench/retrieve.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include <httplib.h>

namespace ralbench {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        const bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                           (c >= 'A' && c <= 'Z');
        if (alnum) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : raw);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<ScoredDoc> finalize_hits(std::vector<ScoredDoc> hits, std::size_t k) {
    std::sort(hits.begin(), hits.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (hits.size() > k) hits.resize(k);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
    return hits;
}

// ---------------------------------------------------------------------------
// BM25
// ---------------------------------------------------------------------------
Bm25Index Bm25Index::build(const Corpus& corpus, double k1, double b) {
    if (corpus.entries.empty()) throw Error("bm25_build: empty corpus");
    Bm25Index ix;
    ix.k1_ = k1;
    ix.b_ = b;

    std::uint64_t total_length = 0;
    for (const auto& inst : corpus.entries) {
        const auto doc = ix.ids_.size();
        ix.ids_.push_back(inst.id);
        const auto tokens = tokenize(inst.key);
        ix.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_length += tokens.size();

        std::map<std::string, std::uint32_t> counts;
        for (const auto& t : tokens) ++counts[t];
        for (const auto& [term, tf] : counts) {
            ix.postings_[term].push_back({doc, tf});
        }
    }
    ix.avgdl_ = static_cast<double>(total_length) / static_cast<double>(ix.ids_.size());
    return ix;
}

const std::vector<Bm25Index::Posting>* Bm25Index::postings(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

double Bm25Index::idf(const std::string& term) const {
    const auto it = postings_.find(term);
    if (it == postings_.end()) return 0.0;
    const double n = static_cast<double>(doc_count());
    const double nt = static_cast<double>(it->second.size());
    return std::log(1.0 + (n - nt + 0.5) / (nt + 0.5));
}

std::vector<ScoredDoc> Bm25Index::query(const std::string& text, std::size_t k) const {
    if (k == 0) throw Error("bm25_query: k must be >= 1");
    auto terms = tokenize(text);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    std::unordered_map<std::size_t, double> scores;
    for (const auto& term : terms) {
        const auto* plist = postings(term);
        if (!plist) continue;
        const double term_idf = idf(term);
        for (const auto& p : *plist) {
            const double dl = doc_lengths_[p.doc];
            const double tf = p.tf;
            const double denom = tf + k1_ * (1.0 - b_ + b_ * dl / avgdl_);
            scores[p.doc] += term_idf * tf * (k1_ + 1.0) / denom;
        }
    }

    std::vector<ScoredDoc> hits;
    hits.reserve(scores.size());
    for (const auto& [doc, score] : scores) {
        if (score > 0.0) hits.push_back({ids_[doc], score, 0});
    }
    return finalize_hits(std::move(hits), k);
}

std::string Bm25Index::serialize() const {
    nlohmann::ordered_json j;
    j["k1"] = k1_;
    j["b"] = b_;
    j["avgdl"] = avgdl_;
    j["ids"] = ids_;
    j["doc_lengths"] = doc_lengths_;
    nlohmann::ordered_json post;
    for (const auto& [term, plist] : postings_) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& p : plist) rows.push_back({p.doc, p.tf});
        post[term] = rows;
    }
    j["postings"] = post;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Embedding providers
// ---------------------------------------------------------------------------
FixtureHashProvider::FixtureHashProvider(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw Error("fixture provider: dimension must be positive");
}

std::string FixtureHashProvider::id() const {
    return "fixture-" + std::to_string(dimension_);
}

std::vector<std::vector<double>> FixtureHashProvider::embed(std::span<const std::string> texts) {
    ++calls_;
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        Rng rng(fnv1a64(text));
        std::vector<double> v(dimension_);
        for (auto& x : v) x = rng.uniform01() * 2.0 - 1.0;
        normalize_in_place(v);
        out.push_back(std::move(v));
    }
    return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string endpoint, std::string model,
                                             std::size_t dimension)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), dimension_(dimension) {}

std::string HttpEmbeddingProvider::id() const {
    return "http-" + model_;
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(
    std::span<const std::string> texts) {
    // endpoint_ is "http://host:port/path"
    const auto scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos) throw Error("embedding endpoint must be a http URL");
    const auto path_start = endpoint_.find('/', scheme_end + 3);
    const std::string host = path_start == std::string::npos
                                 ? endpoint_.substr(0)
                                 : endpoint_.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

    nlohmann::json body;
    body["model"] = model_;
    body["texts"] = std::vector<std::string>(texts.begin(), texts.end());

    httplib::Client client(host);
    client.set_read_timeout(60, 0);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res || res->status != 200) {
        throw Error("embedding provider request failed: " + endpoint_ +
                    (res ? " status " + std::to_string(res->status) : " (no response)"));
    }
    const auto parsed = nlohmann::json::parse(res->body);
    std::vector<std::vector<double>> out;
    for (const auto& row : parsed.at("vectors")) {
        out.push_back(row.get<std::vector<double>>());
        if (out.back().size() != dimension_) {
            throw Error("embedding dimension mismatch: expected " + std::to_string(dimension_) +
                        ", got " + std::to_string(out.back().size()));
        }
    }
    if (out.size() != texts.size()) throw Error("embedding provider returned wrong batch size");
    return out;
}

StaticFileProvider::StaticFileProvider(const std::filesystem::path& path) {
    name_ = "file-" + path.stem().string();
    const auto parsed = nlohmann::json::parse(read_file(path));
    for (const auto& [hash, vec] : parsed.items()) {
        auto v = vec.get<std::vector<double>>();
        if (dimension_ == 0) dimension_ = v.size();
        if (v.size() != dimension_) {
            throw Error("static vectors file has mixed dimensions: " + path.string());
        }
        vectors_.emplace(hash, std::move(v));
    }
    if (vectors_.empty()) throw Error("static vectors file is empty: " + path.string());
}

std::string StaticFileProvider::id() const {
    return name_;
}

std::vector<std::vector<double>> StaticFileProvider::embed(std::span<const std::string> texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        const auto it = vectors_.find(fnv1a64_hex(text));
        if (it == vectors_.end()) {
            throw Error("static vectors file has no entry for text hash " + fnv1a64_hex(text));
        }
        out.push_back(it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding cache
// ---------------------------------------------------------------------------
EmbeddingCache::EmbeddingCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path EmbeddingCache::entry_path(const std::string& provider_id,
                                                 const std::string& text) const {
    return root_ / provider_id / (fnv1a64_hex(text) + ".json");
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& provider_id,
                                                       const std::string& text) const {
    const auto path = entry_path(provider_id, text);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return nlohmann::json::parse(read_file(path)).get<std::vector<double>>();
}

void EmbeddingCache::put(const std::string& provider_id, const std::string& text,
                         const std::vector<double>& vector) {
    atomic_write_file(entry_path(provider_id, text), nlohmann::json(vector).dump());
}

std::vector<std::vector<double>> EmbeddingCache::embed_cached(EmbeddingProvider& provider,
                                                              std::span<const std::string> texts) {
    std::vector<std::vector<double>> out(texts.size());
    std::vector<std::string> misses;
    std::vector<std::size_t> miss_slots;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (auto hit = get(provider.id(), texts[i])) {
            out[i] = std::move(*hit);
        } else {
            misses.push_back(texts[i]);
            miss_slots.push_back(i);
        }
    }
    if (!misses.empty()) {
        auto fresh = provider.embed(misses);
        for (std::size_t i = 0; i < misses.size(); ++i) {
            put(provider.id(), misses[i], fresh[i]);
            out[miss_slots[i]] = std::move(fresh[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dense index
// ---------------------------------------------------------------------------
double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

void normalize_in_place(std::vector<double>& v) {
    const double n = norm(v);
    if (n == 0.0) return;
    for (auto& x : v) x /= n;
}

DenseIndex DenseIndex::build(const Corpus& corpus, EmbeddingProvider& provider,
                             Similarity similarity, EmbeddingCache* cache) {
    if (corpus.entries.empty()) throw Error("dense_build: empty corpus");
    DenseIndex ix;
    ix.similarity_ = similarity;
    ix.dimension_ = provider.dimension();

    std::vector<std::string> keys;
    keys.reserve(corpus.entries.size());
    for (const auto& inst : corpus.entries) {
        ix.ids_.push_back(inst.id);
        keys.push_back(inst.key);
    }

    std::vector<std::vector<double>> vectors;
    try {
        vectors = cache ? cache->embed_cached(provider, keys) : provider.embed(keys);
    } catch (const Error& e) {
        throw Error(std::string("dense_build: provider failure: ") + e.what());
    }

    ix.rows_.reserve(ix.ids_.size() * ix.dimension_);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        auto& v = vectors[i];
        if (v.size() != ix.dimension_) {
            throw Error("dense_build: dimension mismatch at instance " + ix.ids_[i]);
        }
        if (similarity == Similarity::Cosine) normalize_in_place(v);
        ix.rows_.insert(ix.rows_.end(), v.begin(), v.end());
    }
    return ix;
}

std::span<const double> DenseIndex::row(std::size_t i) const {
    return {rows_.data() + i * dimension_, dimension_};
}

std::vector<ScoredDoc> DenseIndex::query_vector(std::span<const double> query,
                                                std::size_t k) const {
    if (query.size() != dimension_) throw Error("dense_query: dimension mismatch");
    std::vector<ScoredDoc> hits;
    hits.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        hits.push_back({ids_[i], dot(row(i), query), 0});
    }
    return finalize_hits(std::move(hits), k);
}

std::vector<ScoredDoc> DenseIndex::query(const std::string& text, EmbeddingProvider& provider,
                                         std::size_t k, EmbeddingCache* cache) const {
    const std::vector<std::string> texts{text};
    auto vectors = cache ? cache->embed_cached(provider, texts) : provider.embed(texts);
    auto& q = vectors.at(0);
    if (similarity_ == Similarity::Cosine) normalize_in_place(q);
    return query_vector(q, k);
}

// ---------------------------------------------------------------------------
// Retriever facade
// ---------------------------------------------------------------------------
Bm25Retriever::Bm25Retriever(const Corpus& corpus) : index_(Bm25Index::build(corpus)) {}

std::vector<ScoredDoc> Bm25Retriever::query(const std::string& text, std::size_t k) const {
    return index_.query(text, k);
}

DenseRetriever::DenseRetriever(const Corpus& corpus, std::shared_ptr<EmbeddingProvider> provider,
                               Similarity similarity, std::shared_ptr<EmbeddingCache> cache)
    : provider_(std::move(provider)),
      cache_(std::move(cache)),
      index_(DenseIndex::build(corpus, *provider_, similarity, cache_.get())) {}

std::string DenseRetriever::describe() const {
    return "dense:" + provider_->id();
}

std::vector<ScoredDoc> DenseRetriever::query(const std::string& text, std::size_t k) const {
    return index_.query(text, *provider_, k, cache_.get());
}

std::vector<RetrievedExample> retrieve_examples(const Corpus& corpus, const Retriever& retriever,
                                                const std::string& input_key, std::size_t k) {
    if (corpus.kind.tag == CorpusKind::Tag::None) return {};
    const auto hits = retriever.query(input_key, k);
    std::vector<RetrievedExample> examples;
    examples.reserve(hits.size());
    for (const auto& hit : hits) {
        const auto* inst = corpus.find(hit.id);
        if (!inst) throw Error("retrieve_examples: hit id not in corpus: " + hit.id);
        examples.push_back({inst->id, inst->key, inst->value, hit.score});
    }
    return examples;
}

}  // namespace ralbench
