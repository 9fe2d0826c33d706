// Shared synthetic fixtures and test doubles.
#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <unistd.h>

#include "ralbench/correct.hpp"
#include "ralbench/generate.hpp"
#include "ralbench/perturb.hpp"

namespace fixtures {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<std::uint64_t> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ralbench-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// N-instance classification corpus whose keys each carry a unique marker
// token; querying with a key always self-retrieves under BM25.
inline ralbench::Corpus classification_corpus(std::size_t n, const std::string& name = "clsfix") {
    ralbench::Corpus corpus;
    corpus.name = name;
    corpus.task = ralbench::TaskKind::TextClassification;
    corpus.kind = ralbench::CorpusKind::labeled();
    for (std::size_t i = 0; i < n; ++i) {
        ralbench::Instance inst;
        inst.id = name + "-" + std::to_string(i);
        inst.task = corpus.task;
        inst.key = "patient case marker" + std::to_string(i) +
                   " reports an outcome after the infusion number " + std::to_string(i * 7 + 3);
        inst.value = i % 2 == 0 ? "True" : "False";
        inst.instruction = ralbench::default_instruction(corpus.task);
        inst.context = inst.key;
        inst.response = inst.value;
        corpus.entries.push_back(std::move(inst));
    }
    corpus.label_space = ralbench::collect_label_space(corpus);
    return corpus;
}

inline ralbench::Corpus triple_corpus(std::size_t n, const std::string& name = "triplefix") {
    static const char* relations[] = {"treats", "inhibits", "interacts with", "causes"};
    ralbench::Corpus corpus;
    corpus.name = name;
    corpus.task = ralbench::TaskKind::TripleExtraction;
    corpus.kind = ralbench::CorpusKind::labeled();
    for (std::size_t i = 0; i < n; ++i) {
        ralbench::Instance inst;
        inst.id = name + "-" + std::to_string(i);
        inst.task = corpus.task;
        inst.key = "compound agent" + std::to_string(i) + " acts on target protein" +
                   std::to_string(i) + " in the assay";
        inst.value = "(agent" + std::to_string(i) + ", " + relations[i % 4] + ", protein" +
                     std::to_string(i) + ")";
        inst.instruction = ralbench::default_instruction(corpus.task);
        inst.context = inst.key;
        inst.response = inst.value;
        corpus.entries.push_back(std::move(inst));
    }
    return corpus;
}

// Subset copy acting as the test split (test set is contained in the corpus).
inline ralbench::Corpus head_subset(const ralbench::Corpus& corpus, std::size_t n) {
    ralbench::Corpus out = corpus;
    out.name = corpus.name + "-test";
    if (out.entries.size() > n) out.entries.resize(n);
    return out;
}

// Counts generate() invocations on a wrapped backend.
class CountingBackend final : public ralbench::Backend {
public:
    explicit CountingBackend(std::shared_ptr<ralbench::Backend> inner)
        : inner_(std::move(inner)) {}
    std::string id() const override { return inner_->id(); }
    bool cacheable() const override { return inner_->cacheable(); }
    std::string generate(const std::string& prompt) override {
        ++calls_;
        return inner_->generate(prompt);
    }
    std::size_t calls() const { return calls_; }

private:
    std::shared_ptr<ralbench::Backend> inner_;
    std::size_t calls_ = 0;
};

// Judge oracle that answers from a key -> original-value map. Detection
// prompts get "incorrect" plus the original label whenever the prompt's label
// differs from the original; labeling prompts get the original label.
class OracleJudgeBackend final : public ralbench::Backend {
public:
    explicit OracleJudgeBackend(std::map<std::string, std::string> original_by_key)
        : original_by_key_(std::move(original_by_key)) {}

    static OracleJudgeBackend from_source(const ralbench::Corpus& source) {
        std::map<std::string, std::string> map;
        for (const auto& e : source.entries) {
            if (e.value) map[e.key] = *e.value;
        }
        return OracleJudgeBackend(std::move(map));
    }

    // Manifest-driven: only ids listed in the manifest are known to be wrong.
    static OracleJudgeBackend from_manifest(const ralbench::PerturbManifest& manifest,
                                            const ralbench::Corpus& corrupted) {
        std::map<std::string, std::string> map;
        for (const auto& entry : manifest.entries) {
            const auto* inst = corrupted.find(entry.id);
            if (inst) map[inst->key] = entry.original_value;
        }
        return OracleJudgeBackend(std::move(map));
    }

    std::string id() const override { return "oracle-judge"; }

    std::string generate(const std::string& prompt) override {
        const auto key_and_label = parse_prompt(prompt);
        const auto it = original_by_key_.find(key_and_label.first);
        if (it == original_by_key_.end()) return "the label is correct";
        if (key_and_label.second.empty()) {
            // Labeling prompt: answer with the original label.
            return it->second;
        }
        if (key_and_label.second == it->second) return "the label is correct";
        return "The label is incorrect. The correct label is: " + it->second;
    }

private:
    static std::pair<std::string, std::string> parse_prompt(const std::string& prompt) {
        std::string key, label;
        std::size_t pos = 0;
        while (pos < prompt.size()) {
            auto end = prompt.find('\n', pos);
            if (end == std::string::npos) end = prompt.size();
            const std::string_view line(prompt.data() + pos, end - pos);
            if (line.starts_with("Input sentence: ")) {
                key = std::string(line.substr(16));
            } else if (line.starts_with("Sentence: ")) {
                key = std::string(line.substr(10));
            } else if (line.starts_with("Label: ")) {
                label = std::string(line.substr(7));
            }
            pos = end + 1;
        }
        return {key, label};
    }

    std::map<std::string, std::string> original_by_key_;
};

}  // namespace fixtures
