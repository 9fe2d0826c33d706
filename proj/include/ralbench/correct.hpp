#pragma once

#include <mutex>

#include "ralbench/generate.hpp"

namespace ralbench {

struct CorrectionOutcome {
    std::string id;
    enum class Verdict { CorrectLabel, IncorrectLabel } verdict = Verdict::CorrectLabel;
    std::optional<std::string> revised_value;  // present iff verdict == IncorrectLabel
    std::string raw_judge_output;

    std::string to_json() const;
};

// Judge prompt for a labeled instance suspected of carrying the wrong label.
std::string detection_prompt(TaskKind task, const std::string& key, const std::string& value);

// Labeling prompt for an unlabeled instance. dataset_aim, when set, restores
// the dataset-specific phrasing "aimed at <aim>".
std::string labeling_prompt(TaskKind task, const std::string& key,
                            const std::optional<std::string>& dataset_aim = std::nullopt);

// Asks the judge backend whether the instance's label is correct and, if not,
// parses the proposed replacement (validated against the answer grammar /
// label space). An unparseable judge response is a logged no-op, never a
// failure.
CorrectionOutcome detect_and_correct(const Instance& instance, Backend& judge,
                                     const std::set<std::string>* label_space,
                                     GenerationCache* cache = nullptr);

// Asks the judge backend for a label for an unlabeled instance; returns
// NoAnswer when the response validates against nothing.
ParsedAnswer label_unlabeled(const Instance& instance, Backend& judge,
                             const std::set<std::string>* label_space,
                             GenerationCache* cache = nullptr,
                             const std::optional<std::string>& dataset_aim = std::nullopt);

// Retrieval-time correction layer: wraps retrieved examples through
// detect_and_correct (labeled corpora) or label_unlabeled (unlabeled), with
// one judge call per corpus entry per run. Plugs into PipelineConfig's
// example transform.
class CorrectionLayer {
public:
    CorrectionLayer(std::shared_ptr<Backend> judge, const Corpus& corpus,
                    GenerationCache* cache = nullptr,
                    std::filesystem::path outcome_log = {});

    RetrievedExample apply(const RetrievedExample& example);
    ExampleTransform transform();

    void set_dataset_aim(std::string aim) { dataset_aim_ = std::move(aim); }
    std::size_t judge_calls() const { return judge_calls_; }

private:
    std::shared_ptr<Backend> judge_;
    TaskKind task_;
    bool corpus_labeled_;
    std::optional<std::set<std::string>> label_space_;
    std::optional<std::string> dataset_aim_;
    GenerationCache* cache_;
    std::filesystem::path outcome_log_;
    std::mutex mutex_;
    std::map<std::string, std::optional<std::string>> judged_;  // id -> final value
    std::size_t judge_calls_ = 0;
};

// Offline mode: rewrite a whole corpus through the judge.
struct CorrectCorpusResult {
    Corpus corpus;
    std::vector<CorrectionOutcome> outcomes;
};

CorrectCorpusResult correct_corpus(const Corpus& corpus, Backend& judge,
                                   GenerationCache* cache = nullptr);

}  // namespace ralbench
