#include "ralbench/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace ralbench {

Outcome outcome_from_record(TaskKind task, const GenerationRecord& record) {
    return {record.answer, parse_gold(task, record.gold)};
}

std::vector<Outcome> outcomes_from_records(TaskKind task,
                                           const std::vector<GenerationRecord>& records) {
    std::vector<Outcome> outcomes;
    outcomes.reserve(records.size());
    for (const auto& r : records) outcomes.push_back(outcome_from_record(task, r));
    return outcomes;
}

double f1_score(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

Prf micro_prf(TaskKind task, const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) throw Error("micro_prf: empty record list");

    if (task == TaskKind::TripleExtraction) {
        std::size_t predicted = 0;
        std::size_t correct = 0;
        for (const auto& o : outcomes) {
            if (o.predicted.kind == ParsedAnswer::Kind::TripleAnswer) {
                ++predicted;
                if (answers_equal(o.predicted, o.gold)) ++correct;
            }
        }
        const std::size_t gold = outcomes.size();
        Prf prf;
        prf.precision = predicted > 0 ? static_cast<double>(correct) / predicted : 0.0;
        prf.recall = static_cast<double>(correct) / gold;
        prf.f1 = f1_score(prf.precision, prf.recall);
        return prf;
    }

    std::size_t correct = 0;
    for (const auto& o : outcomes) {
        if (answers_equal(o.predicted, o.gold)) ++correct;
    }
    const double accuracy = static_cast<double>(correct) / outcomes.size();
    return {accuracy, accuracy, accuracy};
}

namespace {

std::string triple_element(const Triple& t, TripleElement element) {
    switch (element) {
        case TripleElement::Head: return normalize_answer_text(t.head);
        case TripleElement::Relation: return normalize_answer_text(t.relation);
        case TripleElement::Tail: return normalize_answer_text(t.tail);
    }
    return {};
}

// Normalized predicted label; NoAnswer maps to a sentinel no real label can
// collide with because labels are whitespace-collapsed.
std::string predicted_label(const ParsedAnswer& a) {
    if (a.kind == ParsedAnswer::Kind::NoAnswer) return "\x1f<no-answer>";
    return normalize_answer_text(a.label);
}

struct LabelPrf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

std::vector<LabelPrf> per_label_prf(const std::vector<Outcome>& outcomes,
                                    const std::set<std::string>& label_space) {
    std::vector<LabelPrf> rows;
    for (const auto& label : label_space) {
        const std::string target = normalize_answer_text(label);
        std::size_t tp = 0, fp = 0, fn = 0, support = 0;
        for (const auto& o : outcomes) {
            const std::string gold = normalize_answer_text(o.gold.label);
            const std::string pred = predicted_label(o.predicted);
            if (gold == target) {
                ++support;
                if (pred == target) ++tp; else ++fn;
            } else if (pred == target) {
                ++fp;
            }
        }
        LabelPrf row;
        row.support = support;
        row.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        row.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        row.f1 = f1_score(row.precision, row.recall);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

Prf element_prf(const std::vector<Outcome>& outcomes, TripleElement element) {
    if (outcomes.empty()) throw Error("element_prf: empty record list");
    std::size_t predicted = 0;
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
        if (o.gold.kind != ParsedAnswer::Kind::TripleAnswer) {
            throw Error("element_prf: gold is not a triple; non-triple task");
        }
        if (o.predicted.kind == ParsedAnswer::Kind::TripleAnswer) {
            ++predicted;
            if (triple_element(o.predicted.triple, element) ==
                triple_element(o.gold.triple, element)) {
                ++correct;
            }
        }
    }
    Prf prf;
    prf.precision = predicted > 0 ? static_cast<double>(correct) / predicted : 0.0;
    prf.recall = static_cast<double>(correct) / outcomes.size();
    prf.f1 = f1_score(prf.precision, prf.recall);
    return prf;
}

Prf weighted_prf(const std::vector<Outcome>& outcomes, const std::set<std::string>& label_space) {
    if (outcomes.empty()) throw Error("weighted_prf: empty record list");
    const auto rows = per_label_prf(outcomes, label_space);
    const double total = static_cast<double>(outcomes.size());
    Prf prf;
    for (const auto& row : rows) {
        const double w = row.support / total;
        prf.precision += w * row.precision;
        prf.recall += w * row.recall;
        prf.f1 += w * row.f1;
    }
    return prf;
}

double macro_f1(const std::vector<Outcome>& outcomes, const std::set<std::string>& label_space) {
    if (outcomes.empty()) throw Error("macro_f1: empty record list");
    if (label_space.empty()) throw Error("macro_f1: empty label space");
    const auto rows = per_label_prf(outcomes, label_space);
    double sum = 0.0;
    for (const auto& row : rows) sum += row.f1;
    return sum / static_cast<double>(rows.size());
}

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
    std::size_t pos = 0;
    for (bool l : labels) pos += l ? 1 : 0;
    if (pos == 0 || pos == labels.size()) {
        throw Error("degenerate label set: need at least one positive and one negative");
    }
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    check_binary(scores, labels);

    // Average ranks over the pooled sample; ties share the mean rank, which
    // reproduces the 0.5-per-tied-pair convention.
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(scores.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mean_rank;
        i = j + 1;
    }

    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t idx = 0; idx < labels.size(); ++idx) {
        if (labels[idx]) {
            pos_rank_sum += rank[idx];
            ++n_pos;
        }
    }
    const std::size_t n_neg = labels.size() - n_pos;
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    check_binary(scores, labels);

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    std::size_t n_pos = 0;
    for (bool l : labels) n_pos += l ? 1 : 0;

    double area = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0;
    std::size_t predicted = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // Consume a whole tied-score group before emitting a curve point.
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += labels[order[j]] ? 1 : 0;
            ++predicted;
            ++j;
        }
        const double recall = static_cast<double>(tp) / n_pos;
        const double precision = static_cast<double>(tp) / predicted;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

AwarenessRates awareness_rates(const std::vector<AwarenessRecord>& records) {
    AwarenessRates rates;
    for (const auto& r : records) {
        if (r.correct) {
            ++rates.counts.l_f;
            if (!r.claimed_negative) ++rates.counts.f;
        } else {
            ++rates.counts.l_t;
            if (r.claimed_negative) ++rates.counts.t;
        }
    }
    if (rates.counts.l_t > 0) {
        rates.true_rate = static_cast<double>(rates.counts.t) / rates.counts.l_t;
    }
    if (rates.counts.l_f > 0) {
        rates.fake_rate = static_cast<double>(rates.counts.f) / rates.counts.l_f;
    }
    return rates;
}

AwarenessRecord awareness_record_from(const GenerationRecord& record) {
    if (!record.negativity_claim) {
        throw Error("record " + record.id + " is missing the negativity claim");
    }
    return {record.correct, *record.negativity_claim};
}

double MetricReport::primary_metric() const {
    const bool macro = task == TaskKind::NLInference || task == TaskKind::QuestionAnswering;
    const auto it = values.find(macro ? "macro_f1" : "micro_f1");
    if (it != values.end()) return it->second;
    const auto micro = values.find("micro_f1");
    return micro != values.end() ? micro->second : 0.0;
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task_name(task);
    j["corpus_kind"] = corpus_kind;
    j["retriever"] = retriever;
    j["backend"] = backend;
    j["records"] = record_count;
    for (const auto& [name, value] : values) j["metrics"][name] = value;
    if (awareness) {
        nlohmann::ordered_json a;
        a["l_t"] = awareness->counts.l_t;
        a["t"] = awareness->counts.t;
        a["l_f"] = awareness->counts.l_f;
        a["f"] = awareness->counts.f;
        if (awareness->true_rate) a["true_negative_awareness_rate"] = *awareness->true_rate;
        else a["true_negative_awareness_rate"] = nullptr;
        if (awareness->fake_rate) a["fake_negative_awareness_rate"] = *awareness->fake_rate;
        else a["fake_negative_awareness_rate"] = nullptr;
        j["awareness"] = a;
    }
    return j.dump(2);
}

MetricReport score_records(TaskKind task, const std::vector<GenerationRecord>& records,
                           const std::optional<std::set<std::string>>& label_space) {
    MetricReport report;
    report.task = task;
    report.record_count = records.size();
    if (records.empty()) return report;

    const auto outcomes = outcomes_from_records(task, records);
    const auto micro = micro_prf(task, outcomes);
    report.values["micro_precision"] = micro.precision;
    report.values["micro_recall"] = micro.recall;
    report.values["micro_f1"] = micro.f1;

    if (task == TaskKind::TripleExtraction) {
        const auto head = element_prf(outcomes, TripleElement::Head);
        const auto rel = element_prf(outcomes, TripleElement::Relation);
        const auto tail = element_prf(outcomes, TripleElement::Tail);
        report.values["head_f1"] = head.f1;
        report.values["relation_f1"] = rel.f1;
        report.values["tail_f1"] = tail.f1;
        return report;
    }

    // QA has no load-time label space; the per-class metrics run over the
    // option letters observed in gold.
    std::optional<std::set<std::string>> derived;
    if (task == TaskKind::QuestionAnswering) {
        derived.emplace();
        for (const auto& o : outcomes) derived->insert(o.gold.label);
    }
    const auto* space = derived ? &*derived : (label_space ? &*label_space : nullptr);

    if (space && !space->empty()) {
        const auto weighted = weighted_prf(outcomes, *space);
        report.values["weighted_precision"] = weighted.precision;
        report.values["weighted_recall"] = weighted.recall;
        report.values["weighted_f1"] = weighted.f1;
        report.values["macro_f1"] = macro_f1(outcomes, *space);
    }

    const bool has_claims = std::all_of(records.begin(), records.end(), [](const auto& r) {
        return r.negativity_claim.has_value();
    });
    if (has_claims) {
        std::vector<AwarenessRecord> aware;
        aware.reserve(records.size());
        for (const auto& r : records) aware.push_back(awareness_record_from(r));
        report.awareness = awareness_rates(aware);
    }
    return report;
}

}  // namespace ralbench
