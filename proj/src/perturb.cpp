#include "ralbench/perturb.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace ralbench {

namespace {

using nlohmann::ordered_json;

void require_labeled(const Corpus& corpus, const char* op) {
    if (corpus.kind.tag != CorpusKind::Tag::Labeled) {
        throw Error(std::string(op) + ": input corpus must be labeled, got kind " +
                    corpus.kind.to_string());
    }
}

// Replace the value with a uniform draw from the wrong-label pool. For triple
// extraction the pool is the other relation types and entities are kept.
std::string corrupt_value(const Instance& inst, const std::set<std::string>& space, Rng& rng) {
    if (inst.task == TaskKind::TripleExtraction) {
        const auto gold = parse_gold(inst.task, *inst.value);
        std::vector<std::string> pool;
        for (const auto& rel : space) {
            if (rel != gold.triple.relation) pool.push_back(rel);
        }
        if (pool.empty()) throw Error("corrupt: no alternative relation type exists");
        Triple t = gold.triple;
        t.relation = pool[rng.uniform_below(pool.size())];
        return ParsedAnswer::from_triple(t).to_text();
    }
    const std::string original = trim(*inst.value);
    std::vector<std::string> pool;
    for (const auto& label : space) {
        if (label != original) pool.push_back(label);
    }
    if (pool.empty()) throw Error("corrupt: no wrong label exists for value '" + original + "'");
    return pool[rng.uniform_below(pool.size())];
}

}  // namespace

std::string PerturbManifest::to_jsonl() const {
    std::string out;
    for (const auto& e : entries) {
        ordered_json record;
        record["id"] = e.id;
        record["original_value"] = e.original_value;
        record["corrupted_value"] = e.corrupted_value;
        out += record.dump();
        out += '\n';
    }
    return out;
}

PerturbManifest PerturbManifest::from_jsonl(const std::string& text) {
    PerturbManifest m;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (trim(line).empty()) continue;
        const auto record = nlohmann::json::parse(line);
        m.entries.push_back({record.at("id").get<std::string>(),
                             record.at("original_value").get<std::string>(),
                             record.at("corrupted_value").get<std::string>()});
    }
    return m;
}

void PerturbManifest::save(const std::filesystem::path& path) const {
    atomic_write_file(path, to_jsonl());
}

PerturbManifest PerturbManifest::load(const std::filesystem::path& path) {
    return from_jsonl(read_file(path));
}

const ManifestEntry* PerturbManifest::find(const std::string& id) const {
    for (const auto& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

Corpus strip_labels(const Corpus& corpus) {
    require_labeled(corpus, "strip_labels");
    Corpus out = corpus;
    out.kind = CorpusKind::unlabeled();
    // label_space stays: it records the source corpus's label inventory,
    // which labelers need after the values are gone.
    for (auto& e : out.entries) {
        e.value.reset();
        e.response.reset();
    }
    return out;
}

CorruptResult corrupt(const Corpus& corpus, double rate, std::uint64_t seed) {
    require_labeled(corpus, "corrupt");
    if (!(rate > 0.0) || rate > 1.0) {
        throw Error("corrupt: rate must be in (0, 1], got " + std::to_string(rate));
    }

    std::set<std::string> space;
    if (corpus.task == TaskKind::TripleExtraction) {
        space = corpus.relation_space();
        if (space.size() < 2) throw Error("corrupt: fewer than 2 relation types in corpus");
    } else {
        space = corpus.label_space ? *corpus.label_space : collect_label_space(corpus);
        if (space.size() < 2) throw Error("corrupt: label space has fewer than 2 members");
    }

    const auto n = corpus.entries.size();
    // round-half-up of rate * N
    const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));

    Rng rng(seed);
    auto picked = rng.sample_without_replacement(n, count);
    std::sort(picked.begin(), picked.end());

    CorruptResult result;
    result.corpus = corpus;
    result.corpus.kind = CorpusKind::counterfactual(rate);
    for (const auto idx : picked) {
        auto& inst = result.corpus.entries[idx];
        const std::string original = *inst.value;
        const std::string corrupted = corrupt_value(inst, space, rng);
        inst.value = corrupted;
        inst.response = corrupted;
        result.manifest.entries.push_back({inst.id, original, corrupted});
    }
    return result;
}

Corpus merge_diverse(const Corpus& target, const std::vector<Corpus>& others) {
    Corpus out;
    out.name = target.name + "-diverse";
    out.task = target.task;
    out.kind = CorpusKind::diverse();

    std::set<std::string> seen_ids;
    for (const auto& source : others) {
        if (source.name == target.name) {
            throw Error("merge_diverse: source corpus has the target's name: " + source.name);
        }
        if (source.kind.tag != CorpusKind::Tag::Labeled) {
            throw Error("merge_diverse: source corpus " + source.name + " is not labeled");
        }
        for (const auto& e : source.entries) {
            Instance copy = e;
            copy.id = source.name + "/" + e.id;
            if (!seen_ids.insert(copy.id).second) {
                throw Error("merge_diverse: duplicate prefixed id: " + copy.id);
            }
            out.entries.push_back(std::move(copy));
        }
    }
    return out;
}

CorruptResult make_negative_corpus(const Corpus& corpus, std::uint64_t seed) {
    auto result = corrupt(corpus, 1.0, seed);
    result.corpus.kind = CorpusKind::counterfactual(1.0, /*negative=*/true);
    result.manifest.negative_awareness = true;
    return result;
}

}  // namespace ralbench
