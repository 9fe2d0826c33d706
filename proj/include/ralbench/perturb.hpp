#pragma once

#include "ralbench/corpus.hpp"

namespace ralbench {

struct ManifestEntry {
    std::string id;
    std::string original_value;
    std::string corrupted_value;
};

// Sidecar record of which entries a corruption changed. Serialized as
// line-delimited {"id", "original_value", "corrupted_value"} objects.
struct PerturbManifest {
    std::vector<ManifestEntry> entries;
    bool negative_awareness = false;

    std::string to_jsonl() const;
    static PerturbManifest from_jsonl(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static PerturbManifest load(const std::filesystem::path& path);

    const ManifestEntry* find(const std::string& id) const;
};

struct CorruptResult {
    Corpus corpus;
    PerturbManifest manifest;
};

// Testbed 1: same entries with value/response dropped.
Corpus strip_labels(const Corpus& corpus);

// Testbed 2: exactly round(rate * N) entries, chosen by seeded sampling
// without replacement, get a uniformly sampled wrong label. For triple
// extraction only the relation element is replaced. Deterministic per seed.
CorruptResult corrupt(const Corpus& corpus, double rate, std::uint64_t seed);

// Testbed 3: concatenation of the other corpora's entries with ids prefixed
// by their source corpus name; the target contributes nothing.
Corpus merge_diverse(const Corpus& target, const std::vector<Corpus>& others);

// Testbed 4: corrupt at rate 1.0, flagged for negative-awareness runs.
CorruptResult make_negative_corpus(const Corpus& corpus, std::uint64_t seed);

}  // namespace ralbench
