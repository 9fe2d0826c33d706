#include "ralbench/correct.hpp"

#include <mutex>

#include <json.hpp>

namespace ralbench {

std::string CorrectionOutcome::to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["verdict"] = verdict == Verdict::IncorrectLabel ? "incorrect-label" : "correct-label";
    if (revised_value) j["revised_value"] = *revised_value;
    j["raw_judge_output"] = raw_judge_output;
    return j.dump();
}

std::string detection_prompt(TaskKind task, const std::string& key, const std::string& value) {
    return "This is a " + task_display_name(task) +
           " task. Please determine whether the label assigned to the input sentence is "
           "correct. If the label is incorrect, please provide the correct label.\n"
           "Input sentence: " + key + "\nLabel: " + value;
}

std::string labeling_prompt(TaskKind task, const std::string& key,
                            const std::optional<std::string>& dataset_aim) {
    std::string out = "This is a " + task_display_name(task) + " task";
    if (dataset_aim) out += " aimed at " + *dataset_aim;
    out += ". Please assign a label to each provided sentence to support this task.\n"
           "Sentence: " + key + "\nLabel:";
    return out;
}

namespace {

// Case-insensitive scan for "incorrect"; plain "correct" also matches inside
// it, so this must run first when classifying the verdict.
std::optional<std::size_t> find_incorrect(const std::string& raw) {
    const auto pos = to_lower_ascii(raw).find("incorrect");
    if (pos == std::string::npos) return std::nullopt;
    return pos;
}

}  // namespace

CorrectionOutcome detect_and_correct(const Instance& instance, Backend& judge,
                                     const std::set<std::string>* label_space,
                                     GenerationCache* cache) {
    if (!instance.value) throw Error("detect_and_correct: instance has no value");

    CorrectionOutcome outcome;
    outcome.id = instance.id;
    const auto prompt = detection_prompt(instance.task, instance.key, *instance.value);
    outcome.raw_judge_output = generate(judge, prompt, cache).text;

    const auto incorrect_at = find_incorrect(outcome.raw_judge_output);
    if (!incorrect_at) return outcome;  // judged correct: no-op

    // The proposed label trails the verdict keyword.
    const std::string tail = outcome.raw_judge_output.substr(*incorrect_at + 9);
    const auto revised = parse_answer(instance.task, tail, label_space);
    if (!revised.is_answer()) {
        // Unparseable judge output: treated as a no-op so a flaky judge can
        // never corrupt an example that was fine.
        return outcome;
    }
    outcome.verdict = CorrectionOutcome::Verdict::IncorrectLabel;
    outcome.revised_value = revised.to_text();
    return outcome;
}

ParsedAnswer label_unlabeled(const Instance& instance, Backend& judge,
                             const std::set<std::string>* label_space, GenerationCache* cache,
                             const std::optional<std::string>& dataset_aim) {
    if (instance.value) throw Error("label_unlabeled: instance already has a value");
    const auto prompt = labeling_prompt(instance.task, instance.key, dataset_aim);
    const auto raw = generate(judge, prompt, cache).text;
    return parse_answer(instance.task, raw, label_space);
}

CorrectionLayer::CorrectionLayer(std::shared_ptr<Backend> judge, const Corpus& corpus,
                                 GenerationCache* cache, std::filesystem::path outcome_log)
    : judge_(std::move(judge)),
      task_(corpus.task),
      corpus_labeled_(corpus.kind.tag != CorpusKind::Tag::Unlabeled),
      cache_(cache),
      outcome_log_(std::move(outcome_log)) {
    if (corpus.label_space) {
        label_space_ = corpus.label_space;
    } else if (task_has_label_space(corpus.task)) {
        auto space = collect_label_space(corpus);
        if (!space.empty()) label_space_ = std::move(space);
    }
}

RetrievedExample CorrectionLayer::apply(const RetrievedExample& example) {
    std::lock_guard<std::mutex> lock(mutex_);

    const auto it = judged_.find(example.id);
    if (it != judged_.end()) {
        RetrievedExample out = example;
        out.value = it->second;
        return out;
    }

    Instance inst;
    inst.id = example.id;
    inst.task = task_;
    inst.key = example.key;
    inst.value = example.value;

    std::optional<std::string> final_value = example.value;
    const auto* space = label_space_ ? &*label_space_ : nullptr;
    try {
        ++judge_calls_;
        if (example.value) {
            const auto outcome = detect_and_correct(inst, *judge_, space, cache_);
            if (outcome.revised_value) final_value = outcome.revised_value;
            if (!outcome_log_.empty()) append_line(outcome_log_, outcome.to_json());
        } else {
            const auto labeled = label_unlabeled(inst, *judge_, space, cache_, dataset_aim_);
            if (labeled.is_answer()) final_value = labeled.to_text();
            if (!outcome_log_.empty()) {
                CorrectionOutcome outcome;
                outcome.id = example.id;
                outcome.verdict = labeled.is_answer()
                                      ? CorrectionOutcome::Verdict::IncorrectLabel
                                      : CorrectionOutcome::Verdict::CorrectLabel;
                if (labeled.is_answer()) outcome.revised_value = labeled.to_text();
                append_line(outcome_log_, outcome.to_json());
            }
        }
    } catch (const std::exception&) {
        // Judge failure: fall back to the unmodified example.
        final_value = example.value;
    }

    judged_.emplace(example.id, final_value);
    RetrievedExample out = example;
    out.value = final_value;
    return out;
}

ExampleTransform CorrectionLayer::transform() {
    return [this](const RetrievedExample& ex) -> std::optional<RetrievedExample> {
        auto out = apply(ex);
        // An unlabeled example the judge could not label stays out of the
        // prompt entirely.
        if (!corpus_labeled_ && !out.value) return std::nullopt;
        return out;
    };
}

CorrectCorpusResult correct_corpus(const Corpus& corpus, Backend& judge, GenerationCache* cache) {
    CorrectCorpusResult result;
    result.corpus = corpus;
    result.corpus.entries.clear();

    const std::set<std::string>* space = nullptr;
    std::set<std::string> collected;
    if (corpus.label_space) {
        space = &*corpus.label_space;
    } else if (task_has_label_space(corpus.task)) {
        collected = collect_label_space(corpus);
        if (!collected.empty()) space = &collected;
    }

    for (const auto& entry : corpus.entries) {
        Instance out = entry;
        if (entry.value) {
            auto outcome = detect_and_correct(entry, judge, space, cache);
            if (outcome.revised_value) {
                out.value = outcome.revised_value;
                out.response = outcome.revised_value;
            }
            result.outcomes.push_back(std::move(outcome));
        } else {
            const auto labeled = label_unlabeled(entry, judge, space, cache);
            if (!labeled.is_answer()) continue;  // unlabelable entries are dropped
            out.value = labeled.to_text();
            out.response = out.value;
            CorrectionOutcome outcome;
            outcome.id = entry.id;
            outcome.verdict = CorrectionOutcome::Verdict::IncorrectLabel;
            outcome.revised_value = out.value;
            result.outcomes.push_back(std::move(outcome));
        }
        result.corpus.entries.push_back(std::move(out));
    }

    result.corpus.kind = CorpusKind::labeled();
    if (task_has_label_space(result.corpus.task)) {
        result.corpus.label_space = collect_label_space(result.corpus);
    }
    return result;
}

}  // namespace ralbench
