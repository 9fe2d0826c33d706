#pragma once

#include "ralbench/generate.hpp"

namespace ralbench {

// One scored prediction/gold pair; the adapter from GenerationRecord.
struct Outcome {
    ParsedAnswer predicted;
    ParsedAnswer gold;
};

Outcome outcome_from_record(TaskKind task, const GenerationRecord& record);
std::vector<Outcome> outcomes_from_records(TaskKind task,
                                           const std::vector<GenerationRecord>& records);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// F1 = 2PR/(P+R), 0 when P+R == 0.
double f1_score(double precision, double recall);

// Single-label tasks: P == R == F1 == accuracy (NoAnswer counts as a wrong
// prediction). Triple extraction: precision over predicted triples, recall
// over gold triples; a triple is correct only when all three elements match.
Prf micro_prf(TaskKind task, const std::vector<Outcome>& outcomes);

enum class TripleElement { Head, Relation, Tail };

// micro_prf restricted to one triple element.
Prf element_prf(const std::vector<Outcome>& outcomes, TripleElement element);

// Per-label P/R/F1 averaged with gold-support weights.
Prf weighted_prf(const std::vector<Outcome>& outcomes, const std::set<std::string>& label_space);

// Unweighted mean of per-label F1.
double macro_f1(const std::vector<Outcome>& outcomes, const std::set<std::string>& label_space);

// Normalized Mann-Whitney U; tied score pairs count 0.5. Labels are the
// binary truth, scores the positive-class scores.
double auroc(const std::vector<double>& scores, const std::vector<bool>& labels);

// Area under the precision-recall step curve, precision carried rightward at
// each recall step.
double auprc(const std::vector<double>& scores, const std::vector<bool>& labels);

struct AwarenessCounts {
    std::size_t l_t = 0;  // inputs whose retrieved example was a true negative (wrong output)
    std::size_t l_f = 0;  // inputs whose retrieved example was a false negative (correct output)
    std::size_t t = 0;    // true negatives the model recognized
    std::size_t f = 0;    // false negatives the model recognized
};

struct AwarenessRates {
    std::optional<double> true_rate;  // t / l_t, unset when l_t == 0
    std::optional<double> fake_rate;  // f / l_f, unset when l_f == 0
    AwarenessCounts counts;
};

struct AwarenessRecord {
    bool correct = false;
    bool claimed_negative = false;
};

AwarenessRates awareness_rates(const std::vector<AwarenessRecord>& records);

AwarenessRecord awareness_record_from(const GenerationRecord& record);

// ---------------------------------------------------------------------------
// Report cell
// ---------------------------------------------------------------------------
struct MetricReport {
    TaskKind task = TaskKind::TextClassification;
    std::string corpus_kind;
    std::string retriever;
    std::string backend;
    std::size_t record_count = 0;
    std::map<std::string, double> values;              // metric name -> value in [0, 1]
    std::optional<AwarenessRates> awareness;

    // The headline number reported in the comparison grid: macro F1 for NLI
    // and QA, micro F1 otherwise.
    double primary_metric() const;

    std::string to_json() const;
};

MetricReport score_records(TaskKind task, const std::vector<GenerationRecord>& records,
                           const std::optional<std::set<std::string>>& label_space);

}  // namespace ralbench
