#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ralbench/common.hpp"

namespace ralbench {

enum class TaskKind {
    TripleExtraction,
    LinkPrediction,
    TextClassification,
    QuestionAnswering,
    NLInference,
};

std::string task_name(TaskKind task);
TaskKind task_from_name(std::string_view name);

// Human-readable form used inside prompts ("text classification", ...).
std::string task_display_name(TaskKind task);

// True for tasks whose answers come from a closed label set (the label space
// is collected from the corpus at load time).
bool task_has_label_space(TaskKind task);

// ---------------------------------------------------------------------------
// Parsed model answers. Parsing never fails; unusable output becomes NoAnswer
// and scores as an incorrect prediction.
// ---------------------------------------------------------------------------
struct Triple {
    std::string head;
    std::string relation;
    std::string tail;

    bool operator==(const Triple&) const = default;
};

struct ParsedAnswer {
    enum class Kind { NoAnswer, Label, Option, TripleAnswer };

    Kind kind = Kind::NoAnswer;
    std::string label;   // Label: matched label-space member; Option: letter A-E
    Triple triple;       // TripleAnswer only

    static ParsedAnswer none() { return {}; }
    static ParsedAnswer from_label(std::string text);
    static ParsedAnswer from_option(char letter);
    static ParsedAnswer from_triple(Triple t);

    bool is_answer() const { return kind != Kind::NoAnswer; }

    // Canonical text form: labels/options verbatim, triples as "(h, r, t)",
    // NoAnswer as the empty string. parse_gold() inverts this on gold values.
    std::string to_text() const;
};

ParsedAnswer parse_answer(TaskKind task, const std::string& raw,
                          const std::set<std::string>* label_space = nullptr);

// Parse a gold value under the task's answer grammar. Unlike parse_answer
// this is strict: a gold value that does not parse is a corpus defect.
ParsedAnswer parse_gold(TaskKind task, const std::string& value);

// Comparison rule used for the correctness flag: case-insensitive with
// whitespace collapsed, element-wise for triples.
bool answers_equal(const ParsedAnswer& a, const ParsedAnswer& b);

std::string default_instruction(TaskKind task);

// ---------------------------------------------------------------------------
// Corpus data model
// ---------------------------------------------------------------------------
struct Instance {
    std::string id;
    TaskKind task = TaskKind::TextClassification;
    std::string key;                    // retrievable text
    std::optional<std::string> value;   // label; absent in unlabeled corpora
    std::string instruction;
    std::string context;                // defaults to key
    std::optional<std::string> response;  // defaults to value
    std::string meta_json;              // raw meta object, preserved verbatim
};

struct CorpusKind {
    enum class Tag { Labeled, Unlabeled, Counterfactual, Diverse, None };

    Tag tag = Tag::Labeled;
    double rate = 0.0;               // Counterfactual only, in (0, 1]
    bool negative_awareness = false; // Counterfactual(1.0) built for testbed 4

    static CorpusKind labeled() { return {Tag::Labeled, 0.0, false}; }
    static CorpusKind unlabeled() { return {Tag::Unlabeled, 0.0, false}; }
    static CorpusKind counterfactual(double rate, bool negative = false) {
        return {Tag::Counterfactual, rate, negative};
    }
    static CorpusKind diverse() { return {Tag::Diverse, 0.0, false}; }
    static CorpusKind none() { return {Tag::None, 0.0, false}; }

    std::string to_string() const;
};

struct Corpus {
    std::string name;
    TaskKind task = TaskKind::TextClassification;
    CorpusKind kind;
    std::vector<Instance> entries;
    std::optional<std::set<std::string>> label_space;

    std::size_t size() const { return entries.size(); }
    const Instance* find(const std::string& id) const;

    // Distinct relation types across gold triples; the closed-set component
    // that counterfactual corruption flips for triple extraction.
    std::set<std::string> relation_space() const;
};

// Loads a line-delimited corpus file: one JSON object per line with fields
// {"id", "task", "key", "value"?, "meta"?}. Rejects malformed lines (with the
// line number), duplicate ids, task mismatches, and partial labeling. A file
// where every record omits "value" loads as Unlabeled.
Corpus load_corpus(const std::filesystem::path& path, TaskKind task);

// Canonical serialization; loading its own output and re-serializing is a
// byte-identical fixpoint.
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Recompute the label space exactly as load_corpus does (distinct values).
std::set<std::string> collect_label_space(const Corpus& corpus);

}  // namespace ralbench
