#include "ralbench/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include <json.hpp>

namespace ralbench {

namespace {

using nlohmann::ordered_json;

bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0;
}

}  // namespace

std::string task_name(TaskKind task) {
    switch (task) {
        case TaskKind::TripleExtraction: return "triple_extraction";
        case TaskKind::LinkPrediction: return "link_prediction";
        case TaskKind::TextClassification: return "text_classification";
        case TaskKind::QuestionAnswering: return "question_answering";
        case TaskKind::NLInference: return "nl_inference";
    }
    throw Error("unknown task kind");
}

std::string task_display_name(TaskKind task) {
    switch (task) {
        case TaskKind::TripleExtraction: return "triple extraction";
        case TaskKind::LinkPrediction: return "link prediction";
        case TaskKind::TextClassification: return "text classification";
        case TaskKind::QuestionAnswering: return "question answering";
        case TaskKind::NLInference: return "natural language inference";
    }
    throw Error("unknown task kind");
}

TaskKind task_from_name(std::string_view name) {
    if (name == "triple_extraction") return TaskKind::TripleExtraction;
    if (name == "link_prediction") return TaskKind::LinkPrediction;
    if (name == "text_classification") return TaskKind::TextClassification;
    if (name == "question_answering") return TaskKind::QuestionAnswering;
    if (name == "nl_inference") return TaskKind::NLInference;
    throw Error("unknown task name: " + std::string(name));
}

bool task_has_label_space(TaskKind task) {
    return task == TaskKind::TextClassification || task == TaskKind::LinkPrediction ||
           task == TaskKind::NLInference;
}

ParsedAnswer ParsedAnswer::from_label(std::string text) {
    ParsedAnswer a;
    a.kind = Kind::Label;
    a.label = std::move(text);
    return a;
}

ParsedAnswer ParsedAnswer::from_option(char letter) {
    ParsedAnswer a;
    a.kind = Kind::Option;
    a.label = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(letter))));
    return a;
}

ParsedAnswer ParsedAnswer::from_triple(Triple t) {
    ParsedAnswer a;
    a.kind = Kind::TripleAnswer;
    a.triple = std::move(t);
    return a;
}

std::string ParsedAnswer::to_text() const {
    switch (kind) {
        case Kind::NoAnswer: return "";
        case Kind::Label:
        case Kind::Option: return label;
        case Kind::TripleAnswer:
            return "(" + triple.head + ", " + triple.relation + ", " + triple.tail + ")";
    }
    return "";
}

namespace {

// First "(h, r, t)" or "{h, r, t}" group in raw. The head and relation end at
// the first two commas; the remainder up to the closing bracket is the tail,
// so tails containing commas survive.
std::optional<Triple> extract_triple(const std::string& raw) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
        char open = raw[i];
        if (open != '(' && open != '{') continue;
        char close = open == '(' ? ')' : '}';
        const auto end = raw.find(close, i + 1);
        if (end == std::string::npos) continue;
        const std::string body = raw.substr(i + 1, end - i - 1);
        const auto c1 = body.find(',');
        if (c1 == std::string::npos) continue;
        const auto c2 = body.find(',', c1 + 1);
        if (c2 == std::string::npos) continue;
        Triple t;
        t.head = normalize_answer_text(body.substr(0, c1));
        t.relation = normalize_answer_text(body.substr(c1 + 1, c2 - c1 - 1));
        t.tail = normalize_answer_text(body.substr(c2 + 1));
        if (t.head.empty() || t.relation.empty() || t.tail.empty()) continue;
        return t;
    }
    return std::nullopt;
}

// Earliest occurrence of any label-space member, case-insensitive; on equal
// start positions the longest member wins.
std::optional<std::string> match_label(const std::string& raw,
                                       const std::set<std::string>& label_space) {
    const std::string haystack = to_lower_ascii(raw);
    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    const std::string* best = nullptr;
    for (const auto& label : label_space) {
        if (label.empty()) continue;
        const auto pos = haystack.find(to_lower_ascii(label));
        if (pos == std::string::npos) continue;
        if (pos < best_pos || (pos == best_pos && label.size() > best_len)) {
            best_pos = pos;
            best_len = label.size();
            best = &label;
        }
    }
    if (!best) return std::nullopt;
    return *best;
}

std::optional<char> match_option_letter(const std::string& raw) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (upper < 'A' || upper > 'E') continue;
        const bool left_ok = i == 0 || !is_word_char(static_cast<unsigned char>(raw[i - 1]));
        const bool right_ok =
            i + 1 == raw.size() || !is_word_char(static_cast<unsigned char>(raw[i + 1]));
        if (left_ok && right_ok) return upper;
    }
    return std::nullopt;
}

}  // namespace

ParsedAnswer parse_answer(TaskKind task, const std::string& raw,
                          const std::set<std::string>* label_space) {
    switch (task) {
        case TaskKind::TripleExtraction: {
            if (auto t = extract_triple(raw)) return ParsedAnswer::from_triple(*t);
            return ParsedAnswer::none();
        }
        case TaskKind::QuestionAnswering: {
            if (auto c = match_option_letter(raw)) return ParsedAnswer::from_option(*c);
            return ParsedAnswer::none();
        }
        case TaskKind::LinkPrediction:
        case TaskKind::TextClassification:
        case TaskKind::NLInference: {
            if (!label_space || label_space->empty()) return ParsedAnswer::none();
            if (auto l = match_label(raw, *label_space)) return ParsedAnswer::from_label(*l);
            return ParsedAnswer::none();
        }
    }
    return ParsedAnswer::none();
}

ParsedAnswer parse_gold(TaskKind task, const std::string& value) {
    switch (task) {
        case TaskKind::TripleExtraction: {
            if (auto t = extract_triple(value)) return ParsedAnswer::from_triple(*t);
            throw Error("gold value is not a parseable triple: " + value);
        }
        case TaskKind::QuestionAnswering: {
            const std::string trimmed = trim(value);
            if (trimmed.size() == 1) {
                const char upper =
                    static_cast<char>(std::toupper(static_cast<unsigned char>(trimmed[0])));
                if (upper >= 'A' && upper <= 'E') return ParsedAnswer::from_option(upper);
            }
            throw Error("gold value is not an option letter A-E: " + value);
        }
        case TaskKind::LinkPrediction:
        case TaskKind::TextClassification:
        case TaskKind::NLInference:
            return ParsedAnswer::from_label(trim(value));
    }
    throw Error("unknown task kind");
}

bool answers_equal(const ParsedAnswer& a, const ParsedAnswer& b) {
    if (a.kind == ParsedAnswer::Kind::NoAnswer || b.kind == ParsedAnswer::Kind::NoAnswer)
        return false;
    if (a.kind == ParsedAnswer::Kind::TripleAnswer || b.kind == ParsedAnswer::Kind::TripleAnswer) {
        if (a.kind != b.kind) return false;
        return normalize_answer_text(a.triple.head) == normalize_answer_text(b.triple.head) &&
               normalize_answer_text(a.triple.relation) ==
                   normalize_answer_text(b.triple.relation) &&
               normalize_answer_text(a.triple.tail) == normalize_answer_text(b.triple.tail);
    }
    return normalize_answer_text(a.label) == normalize_answer_text(b.label);
}

std::string default_instruction(TaskKind task) {
    switch (task) {
        case TaskKind::TextClassification:
            return "You are an excellent linguist. The task is to predict whether this "
                   "sentence is True or False.";
        case TaskKind::LinkPrediction:
            return "You are an excellent linguist. The task is to answer the question: "
                   "what is the relationship between the head entity and tail entity?";
        case TaskKind::TripleExtraction:
            return "You are an excellent linguist. The task is to extract the triple "
                   "(head entity, relation type, tail entity) from this sentence.";
        case TaskKind::QuestionAnswering:
            return "You are an excellent doctor. The task is to answer the multiple-choice "
                   "question with the letter of the correct option (A, B, C, D or E).";
        case TaskKind::NLInference:
            return "You are an excellent linguist. The task is to predict whether the "
                   "hypothesis is positive or negative given the premise.";
    }
    throw Error("unknown task kind");
}

std::string CorpusKind::to_string() const {
    switch (tag) {
        case Tag::Labeled: return "labeled";
        case Tag::Unlabeled: return "unlabeled";
        case Tag::Counterfactual: {
            std::string out = negative_awareness ? "negative" : "counterfactual";
            char buf[32];
            std::snprintf(buf, sizeof buf, ":%g", rate);
            return out + buf;
        }
        case Tag::Diverse: return "diverse";
        case Tag::None: return "none";
    }
    return "labeled";
}

const Instance* Corpus::find(const std::string& id) const {
    for (const auto& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

std::set<std::string> Corpus::relation_space() const {
    std::set<std::string> relations;
    for (const auto& e : entries) {
        if (!e.value) continue;
        const auto gold = parse_gold(TaskKind::TripleExtraction, *e.value);
        relations.insert(gold.triple.relation);
    }
    return relations;
}

std::set<std::string> collect_label_space(const Corpus& corpus) {
    std::set<std::string> labels;
    for (const auto& e : corpus.entries) {
        if (e.value) labels.insert(trim(*e.value));
    }
    return labels;
}

Corpus load_corpus(const std::filesystem::path& path, TaskKind task) {
    const auto lines = read_lines(path);
    Corpus corpus;
    corpus.name = path.stem().string();
    corpus.task = task;

    std::unordered_set<std::string> seen_ids;
    std::size_t labeled = 0;
    std::size_t unlabeled = 0;

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (trim(line).empty()) continue;
        const auto lineno = std::to_string(i + 1);

        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ":" + lineno + ": malformed record: " + e.what());
        }
        if (!record.is_object()) {
            throw Error(path.string() + ":" + lineno + ": record is not a JSON object");
        }

        Instance inst;
        try {
            inst.id = record.at("id").get<std::string>();
            inst.key = record.at("key").get<std::string>();
            if (record.contains("task")) {
                const auto rec_task = task_from_name(record.at("task").get<std::string>());
                if (rec_task != task) {
                    throw Error("task mismatch: record says " + task_name(rec_task) +
                                ", corpus is " + task_name(task));
                }
            }
            if (record.contains("value") && !record.at("value").is_null()) {
                inst.value = record.at("value").get<std::string>();
            }
            if (record.contains("meta") && !record.at("meta").is_null()) {
                inst.meta_json = record.at("meta").dump();
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ":" + lineno + ": malformed record: " + e.what());
        } catch (const Error& e) {
            throw Error(path.string() + ":" + lineno + ": " + e.what());
        }

        if (inst.id.empty()) throw Error(path.string() + ":" + lineno + ": empty id");
        if (inst.key.empty()) throw Error(path.string() + ":" + lineno + ": empty key");
        if (!seen_ids.insert(inst.id).second) {
            throw Error(path.string() + ":" + lineno + ": duplicate id: " + inst.id);
        }

        inst.task = task;
        inst.instruction = default_instruction(task);
        inst.context = inst.key;
        inst.response = inst.value;
        if (inst.value) ++labeled; else ++unlabeled;
        corpus.entries.push_back(std::move(inst));
    }

    if (labeled > 0 && unlabeled > 0) {
        throw Error(path.string() + ": partial labeling rejected (" + std::to_string(labeled) +
                    " labeled, " + std::to_string(unlabeled) + " unlabeled records)");
    }
    corpus.kind = labeled == 0 && unlabeled > 0 ? CorpusKind::unlabeled() : CorpusKind::labeled();

    if (corpus.kind.tag == CorpusKind::Tag::Labeled && task_has_label_space(task)) {
        corpus.label_space = collect_label_space(corpus);
    }
    return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& e : corpus.entries) {
        ordered_json record;
        record["id"] = e.id;
        record["task"] = task_name(e.task);
        record["key"] = e.key;
        if (e.value) record["value"] = *e.value;
        if (!e.meta_json.empty()) record["meta"] = nlohmann::json::parse(e.meta_json);
        out += record.dump();
        out += '\n';
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    atomic_write_file(path, serialize_corpus(corpus));
}

}  // namespace ralbench
