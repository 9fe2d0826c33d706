#include "ralbench/generate.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <future>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace ralbench {

const char* const kNegativityInstruction =
    "Please determine whether the retrieved example constitutes negative information. "
    "If it is negative, please output False; if it is not negative, please output True";

std::string assemble_prompt(const PromptSpec& spec) {
    std::string out = spec.instruction;
    out += '\n';
    if (!spec.examples.empty()) {
        out += "Examples:\n";
        for (const auto& ex : spec.examples) {
            if (ex.value) {
                out += "context: " + ex.key + "\nresponse: " + *ex.value + "\n";
            } else {
                out += "retrieved sentence: " + ex.key + "\n";
            }
        }
    }
    out += "context: " + spec.context + "\nresponse:";
    if (spec.ask_negativity) {
        out += '\n';
        out += kNegativityInstruction;
    }
    return out;
}

std::string MockEchoBackend::generate(const std::string& prompt) {
    // First "response: <text>" line is the first example's response.
    static const std::string marker = "response: ";
    std::size_t pos = 0;
    while (pos < prompt.size()) {
        auto end = prompt.find('\n', pos);
        if (end == std::string::npos) end = prompt.size();
        const std::string_view line(prompt.data() + pos, end - pos);
        if (line.starts_with(marker)) {
            return std::string(line.substr(marker.size()));
        }
        pos = end + 1;
    }
    return "";
}

InflightGate::InflightGate(std::size_t limit) : available_(limit == 0 ? 1 : limit) {}

void InflightGate::acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [this] { return available_ > 0; });
    --available_;
}

void InflightGate::release() {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++available_;
    }
    cv_.notify_one();
}

HttpChatBackend::HttpChatBackend(HttpChatConfig config, std::shared_ptr<InflightGate> gate)
    : config_(std::move(config)), gate_(std::move(gate)) {}

std::string HttpChatBackend::id() const {
    return "http:" + config_.model + ":t=" + std::to_string(config_.temperature) +
           ":mt=" + std::to_string(config_.max_tokens);
}

namespace {

struct GateGuard {
    InflightGate* gate;
    explicit GateGuard(InflightGate* g) : gate(g) {
        if (gate) gate->acquire();
    }
    ~GateGuard() {
        if (gate) gate->release();
    }
};

}  // namespace

std::string HttpChatBackend::generate(const std::string& prompt) {
    GateGuard guard(gate_.get());
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw Error("backend endpoint must be a http URL");
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    const std::string host = path_start == std::string::npos ? config_.endpoint
                                                             : config_.endpoint.substr(0, path_start);
    const std::string path =
        path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);

    nlohmann::json body;
    body["model"] = config_.model;
    body["prompt"] = prompt;
    body["temperature"] = config_.temperature;
    body["max_tokens"] = config_.max_tokens;
    const std::string payload = body.dump();

    std::string last_error;
    int delay_ms = config_.backoff_initial_ms;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
        httplib::Client client(host);
        client.set_read_timeout(120, 0);
        if (!config_.api_key_env.empty()) {
            if (const char* key = std::getenv(config_.api_key_env.c_str())) {
                client.set_default_headers({{"Authorization", std::string("Bearer ") + key}});
            }
        }
        auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last_error = "no response from " + config_.endpoint;
            continue;
        }
        if (res->status != 200) {
            last_error = "status " + std::to_string(res->status) + " from " + config_.endpoint;
            continue;
        }
        try {
            return nlohmann::json::parse(res->body).at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("malformed backend response: ") + e.what());
        }
    }
    throw Error("backend request failed after " + std::to_string(config_.max_retries + 1) +
                " attempts: " + last_error);
}

GenerationCache::GenerationCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path GenerationCache::entry_path(const std::string& backend_id,
                                                  const std::string& prompt) const {
    const std::string key = backend_id + '\x1f' + prompt;
    return root_ / "generations" / (fnv1a64_hex(key) + ".json");
}

std::optional<std::string> GenerationCache::get(const std::string& backend_id,
                                                const std::string& prompt) const {
    const auto path = entry_path(backend_id, prompt);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return nlohmann::json::parse(read_file(path)).at("text").get<std::string>();
}

void GenerationCache::put(const std::string& backend_id, const std::string& prompt,
                          const std::string& response) {
    nlohmann::ordered_json j;
    j["backend"] = backend_id;
    j["text"] = response;
    atomic_write_file(entry_path(backend_id, prompt), j.dump());
}

GenerateOutcome generate(Backend& backend, const std::string& prompt, GenerationCache* cache) {
    GenerateOutcome out;
    if (!backend.cacheable() || !cache) {
        out.text = backend.generate(prompt);
        return out;  // mocks report zero latency so records stay reproducible
    }
    if (auto hit = cache->get(backend.id(), prompt)) {
        out.text = std::move(*hit);
        out.cache_hit = true;
        return out;
    }
    const auto start = std::chrono::steady_clock::now();
    out.text = backend.generate(prompt);
    const auto stop = std::chrono::steady_clock::now();
    out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(stop - start).count();
    cache->put(backend.id(), prompt, out.text);
    return out;
}

std::optional<std::string> extract_negativity_token(const std::string& raw) {
    const std::string lower = to_lower_ascii(raw);
    std::optional<std::string> last;
    std::size_t last_pos = 0;
    auto scan = [&](std::string_view needle, const char* canonical) {
        std::size_t pos = 0;
        while ((pos = lower.find(needle, pos)) != std::string::npos) {
            const bool left_ok =
                pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
            const auto after = pos + needle.size();
            const bool right_ok =
                after >= lower.size() || !std::isalnum(static_cast<unsigned char>(lower[after]));
            if ((left_ok && right_ok) && (!last || pos >= last_pos)) {
                last = canonical;
                last_pos = pos;
            }
            ++pos;
        }
    };
    scan("true", "True");
    scan("false", "False");
    return last;
}

bool negativity_claim_from_token(const std::string& token, NegativityMapping mapping) {
    const bool is_false = token == "False";
    return mapping == NegativityMapping::InstructionLiteral ? is_false : !is_false;
}

namespace {

const char* answer_kind_name(ParsedAnswer::Kind kind) {
    switch (kind) {
        case ParsedAnswer::Kind::NoAnswer: return "none";
        case ParsedAnswer::Kind::Label: return "label";
        case ParsedAnswer::Kind::Option: return "option";
        case ParsedAnswer::Kind::TripleAnswer: return "triple";
    }
    return "none";
}

ParsedAnswer answer_from_parts(const std::string& kind, const std::string& text) {
    if (kind == "none") return ParsedAnswer::none();
    if (kind == "label") return ParsedAnswer::from_label(text);
    if (kind == "option") {
        if (text.empty()) throw Error("record answer: empty option");
        return ParsedAnswer::from_option(text[0]);
    }
    if (kind == "triple") {
        const auto parsed = parse_gold(TaskKind::TripleExtraction, text);
        return parsed;
    }
    throw Error("record answer: unknown kind " + kind);
}

}  // namespace

std::string GenerationRecord::to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["prompt"] = prompt;
    j["backend"] = backend_id;
    j["raw_output"] = raw_output;
    j["answer"] = {{"kind", answer_kind_name(answer.kind)}, {"text", answer.to_text()}};
    j["gold"] = gold;
    j["correct"] = correct;
    j["example_ids"] = example_ids;
    if (negativity_token) j["negativity_token"] = *negativity_token;
    if (negativity_claim) j["negativity_claim"] = *negativity_claim;
    j["latency_ms"] = latency_ms;
    j["cache_hit"] = cache_hit;
    if (error) j["error"] = *error;
    return j.dump();
}

GenerationRecord GenerationRecord::from_json(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    GenerationRecord r;
    r.id = j.at("id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.backend_id = j.at("backend").get<std::string>();
    r.raw_output = j.at("raw_output").get<std::string>();
    r.answer = answer_from_parts(j.at("answer").at("kind").get<std::string>(),
                                 j.at("answer").at("text").get<std::string>());
    r.gold = j.at("gold").get<std::string>();
    r.correct = j.at("correct").get<bool>();
    r.example_ids = j.at("example_ids").get<std::vector<std::string>>();
    if (j.contains("negativity_token")) r.negativity_token = j.at("negativity_token").get<std::string>();
    if (j.contains("negativity_claim")) r.negativity_claim = j.at("negativity_claim").get<bool>();
    r.latency_ms = j.at("latency_ms").get<std::int64_t>();
    r.cache_hit = j.at("cache_hit").get<bool>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    return r;
}

std::vector<GenerationRecord> load_records(const std::filesystem::path& path) {
    std::vector<GenerationRecord> records;
    if (!std::filesystem::exists(path)) return records;
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        records.push_back(GenerationRecord::from_json(line));
    }
    return records;
}

namespace {

GenerationRecord run_one(const Instance& inst, const Corpus& corpus, const Retriever& retriever,
                         Backend& backend, const PipelineConfig& config, GenerationCache* cache,
                         const std::set<std::string>* label_space) {
    GenerationRecord record;
    record.id = inst.id;
    record.backend_id = backend.id();
    record.gold = inst.value.value_or("");

    try {
        auto examples = retrieve_examples(corpus, retriever, inst.key, config.k);
        if (config.transform) {
            std::vector<RetrievedExample> kept;
            kept.reserve(examples.size());
            for (const auto& ex : examples) {
                if (auto out = config.transform(ex)) kept.push_back(std::move(*out));
            }
            examples = std::move(kept);
        }
        for (const auto& ex : examples) record.example_ids.push_back(ex.id);

        PromptSpec spec;
        spec.instruction =
            config.instruction_override ? *config.instruction_override : inst.instruction;
        spec.examples = std::move(examples);
        spec.context = inst.context.empty() ? inst.key : inst.context;
        spec.ask_negativity = config.ask_negativity;
        record.prompt = assemble_prompt(spec);

        const auto outcome = generate(backend, record.prompt, cache);
        record.raw_output = outcome.text;
        record.latency_ms = outcome.latency_ms;
        record.cache_hit = outcome.cache_hit;

        record.answer = parse_answer(inst.task, record.raw_output, label_space);
        record.correct = inst.value
                             ? answers_equal(record.answer, parse_gold(inst.task, *inst.value))
                             : false;
    } catch (const std::exception& e) {
        record.error = e.what();
        record.answer = ParsedAnswer::none();
        record.correct = false;
    }

    if (config.ask_negativity) {
        record.negativity_token = extract_negativity_token(record.raw_output);
        record.negativity_claim =
            record.negativity_token
                ? negativity_claim_from_token(*record.negativity_token, config.negativity_mapping)
                : false;
    }
    return record;
}

}  // namespace

std::vector<GenerationRecord> run_pipeline(const Corpus& test_set, const Corpus& corpus,
                                           const Retriever& retriever, Backend& backend,
                                           const PipelineConfig& config, GenerationCache* cache) {
    if (test_set.task != corpus.task && corpus.kind.tag != CorpusKind::Tag::Diverse &&
        corpus.kind.tag != CorpusKind::Tag::None) {
        throw Error("run_pipeline: test set and corpus task kinds differ");
    }
    for (const auto& inst : test_set.entries) {
        if (!inst.value) throw Error("run_pipeline: test instance " + inst.id + " has no gold value");
    }

    const std::set<std::string>* label_space = nullptr;
    if (test_set.label_space) {
        label_space = &*test_set.label_space;
    } else if (corpus.label_space) {
        label_space = &*corpus.label_space;
    }

    // Resume: completed records on disk are reused verbatim; records that
    // carry an error are dropped from the file and retried.
    std::unordered_map<std::string, std::string> done;
    if (!config.records_path.empty() && config.resume &&
        std::filesystem::exists(config.records_path)) {
        std::string kept;
        bool dropped = false;
        for (const auto& line : read_lines(config.records_path)) {
            if (trim(line).empty()) continue;
            auto record = GenerationRecord::from_json(line);
            if (record.error) {
                dropped = true;
                continue;
            }
            done.emplace(std::move(record.id), line);
            kept += line;
            kept += '\n';
        }
        if (dropped) atomic_write_file(config.records_path, kept);
    } else if (!config.records_path.empty() && !config.resume) {
        std::filesystem::remove(config.records_path);
    }

    std::vector<GenerationRecord> records;
    records.reserve(test_set.entries.size());

    const std::size_t workers = std::max<std::size_t>(1, config.concurrency);
    std::size_t next = 0;
    while (next < test_set.entries.size()) {
        // One bounded wave of work; results commit in instance order.
        std::vector<std::pair<std::size_t, std::future<GenerationRecord>>> inflight;
        while (next < test_set.entries.size() && inflight.size() < workers) {
            const auto idx = next++;
            const auto& inst = test_set.entries[idx];
            if (done.count(inst.id)) {
                records.push_back(GenerationRecord::from_json(done[inst.id]));
                continue;
            }
            if (workers == 1) {
                auto record = run_one(inst, corpus, retriever, backend, config, cache, label_space);
                if (!config.records_path.empty()) append_line(config.records_path, record.to_json());
                records.push_back(std::move(record));
            } else {
                inflight.emplace_back(idx, std::async(std::launch::async, [&, idx] {
                    return run_one(test_set.entries[idx], corpus, retriever, backend, config,
                                   cache, label_space);
                }));
            }
        }
        for (auto& [idx, fut] : inflight) {
            auto record = fut.get();
            if (!config.records_path.empty()) append_line(config.records_path, record.to_json());
            records.push_back(std::move(record));
        }
    }
    return records;
}

}  // namespace ralbench
