#pragma once

#include <map>
#include <memory>
#include <span>
#include <unordered_map>

#include "ralbench/corpus.hpp"

namespace ralbench {

// Lowercase, split on any non-alphanumeric byte (ASCII classes; multibyte
// sequences act as separators), drop empties.
std::vector<std::string> tokenize(std::string_view text);

struct ScoredDoc {
    std::string id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based

    bool operator==(const ScoredDoc&) const = default;
};

// Sort hits into the harness's total result order (score desc, id asc),
// assign ranks, truncate to k.
std::vector<ScoredDoc> finalize_hits(std::vector<ScoredDoc> hits, std::size_t k);

// ---------------------------------------------------------------------------
// Okapi BM25 over instance keys
// ---------------------------------------------------------------------------
class Bm25Index {
public:
    struct Posting {
        std::size_t doc = 0;  // index into ids()
        std::uint32_t tf = 0;
    };

    static Bm25Index build(const Corpus& corpus, double k1 = 1.2, double b = 0.75);

    std::vector<ScoredDoc> query(const std::string& text, std::size_t k) const;

    std::size_t doc_count() const { return doc_lengths_.size(); }
    double avg_doc_length() const { return avgdl_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<Posting>* postings(const std::string& term) const;
    double idf(const std::string& term) const;

    std::string serialize() const;

private:
    std::map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avgdl_ = 0.0;
    double k1_ = 1.2;
    double b_ = 0.75;
};

// ---------------------------------------------------------------------------
// Embedding providers (stand-ins for Contriever/MedCPT-class models)
// ---------------------------------------------------------------------------
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

// Deterministic text -> pseudo-random unit vector, for offline tests and mock
// runs. Seeded from a hash of the text, so equal texts embed identically.
class FixtureHashProvider final : public EmbeddingProvider {
public:
    explicit FixtureHashProvider(std::size_t dimension);
    std::string id() const override;
    std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

    std::size_t call_count() const { return calls_; }

private:
    std::size_t dimension_;
    std::size_t calls_ = 0;
};

// Wire contract: POST {"model", "texts"} -> {"vectors"}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string endpoint, std::string model, std::size_t dimension);
    std::string id() const override;
    std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

private:
    std::string endpoint_;
    std::string model_;
    std::size_t dimension_;
};

// Static vectors file: one JSON object mapping fnv1a64 hex text hashes to
// vectors.
class StaticFileProvider final : public EmbeddingProvider {
public:
    explicit StaticFileProvider(const std::filesystem::path& path);
    std::string id() const override;
    std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

private:
    std::string name_;
    std::size_t dimension_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

// Content-addressed embedding cache: one file per (provider id, text hash).
class EmbeddingCache {
public:
    explicit EmbeddingCache(std::filesystem::path root);

    std::optional<std::vector<double>> get(const std::string& provider_id,
                                           const std::string& text) const;
    void put(const std::string& provider_id, const std::string& text,
             const std::vector<double>& vector);

    // Cache-through embedding of a batch; calls the provider only for misses.
    std::vector<std::vector<double>> embed_cached(EmbeddingProvider& provider,
                                                  std::span<const std::string> texts);

private:
    std::filesystem::path root_;
    std::filesystem::path entry_path(const std::string& provider_id,
                                     const std::string& text) const;
};

// ---------------------------------------------------------------------------
// Exact dense retrieval
// ---------------------------------------------------------------------------
enum class Similarity { Cosine, Dot };

class DenseIndex {
public:
    static DenseIndex build(const Corpus& corpus, EmbeddingProvider& provider,
                            Similarity similarity, EmbeddingCache* cache = nullptr);

    std::vector<ScoredDoc> query(const std::string& text, EmbeddingProvider& provider,
                                 std::size_t k, EmbeddingCache* cache = nullptr) const;
    std::vector<ScoredDoc> query_vector(std::span<const double> query, std::size_t k) const;

    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dimension_; }
    Similarity similarity() const { return similarity_; }
    const std::vector<std::string>& ids() const { return ids_; }
    std::span<const double> row(std::size_t i) const;

private:
    std::vector<std::string> ids_;
    std::vector<double> rows_;  // row-major, ids_.size() x dimension_
    std::size_t dimension_ = 0;
    Similarity similarity_ = Similarity::Cosine;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
void normalize_in_place(std::vector<double>& v);

// ---------------------------------------------------------------------------
// Retriever facade used by the pipeline
// ---------------------------------------------------------------------------
struct RetrievedExample {
    std::string id;
    std::string key;
    std::optional<std::string> value;
    double score = 0.0;
};

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::string describe() const = 0;
    virtual std::vector<ScoredDoc> query(const std::string& text, std::size_t k) const = 0;
};

class NoneRetriever final : public Retriever {
public:
    std::string describe() const override { return "none"; }
    std::vector<ScoredDoc> query(const std::string&, std::size_t) const override { return {}; }
};

class Bm25Retriever final : public Retriever {
public:
    explicit Bm25Retriever(const Corpus& corpus);
    std::string describe() const override { return "bm25"; }
    std::vector<ScoredDoc> query(const std::string& text, std::size_t k) const override;

private:
    Bm25Index index_;
};

class DenseRetriever final : public Retriever {
public:
    DenseRetriever(const Corpus& corpus, std::shared_ptr<EmbeddingProvider> provider,
                   Similarity similarity, std::shared_ptr<EmbeddingCache> cache = nullptr);
    std::string describe() const override;
    std::vector<ScoredDoc> query(const std::string& text, std::size_t k) const override;

private:
    std::shared_ptr<EmbeddingProvider> provider_;
    std::shared_ptr<EmbeddingCache> cache_;
    DenseIndex index_;
};

// Top-k (key, value) pairs for a query against a corpus; the pipeline's
// retrieval step. A CorpusKind::None corpus yields no examples.
std::vector<RetrievedExample> retrieve_examples(const Corpus& corpus, const Retriever& retriever,
                                                const std::string& input_key, std::size_t k);

}  // namespace ralbench
