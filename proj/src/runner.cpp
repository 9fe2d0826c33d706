#include "ralbench/runner.hpp"

#include <algorithm>
#include <future>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "ralbench/perturb.hpp"

namespace ralbench {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string sanitize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : raw);
        } else if (!out.empty() && out.back() != '-') {
            out.push_back('-');
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out.empty() ? "x" : out;
}

}  // namespace

std::string CorpusKindSpec::label() const {
    if (kind == "counterfactual") {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", rate);
        return std::string("counterfactual-") + buf;
    }
    return kind;
}

ProviderSpec ProviderSpec::parse(const std::string& shorthand) {
    ProviderSpec spec;
    const auto colon = shorthand.find(':');
    spec.kind = colon == std::string::npos ? shorthand : shorthand.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : shorthand.substr(colon + 1);
    if (spec.kind == "fixture") {
        spec.dim = rest.empty() ? 32 : std::stoul(rest);
    } else if (spec.kind == "file") {
        if (rest.empty()) throw Error("provider spec 'file:' needs a path");
        spec.path = rest;
    } else if (spec.kind == "http") {
        // http:ENDPOINT|MODEL|DIM
        std::vector<std::string> parts;
        std::stringstream ss(rest);
        std::string part;
        while (std::getline(ss, part, '|')) parts.push_back(part);
        if (parts.size() != 3) throw Error("provider spec 'http:' needs ENDPOINT|MODEL|DIM");
        spec.endpoint = parts[0];
        spec.model = parts[1];
        spec.dim = std::stoul(parts[2]);
    } else {
        throw Error("unknown provider kind: " + spec.kind);
    }
    return spec;
}

std::shared_ptr<EmbeddingProvider> ProviderSpec::instantiate() const {
    if (kind == "fixture") return std::make_shared<FixtureHashProvider>(dim);
    if (kind == "file") return std::make_shared<StaticFileProvider>(path);
    if (kind == "http") return std::make_shared<HttpEmbeddingProvider>(endpoint, model, dim);
    throw Error("unknown provider kind: " + kind);
}

std::string ProviderSpec::label() const {
    if (kind == "fixture") return "fixture-" + std::to_string(dim);
    if (kind == "file") return "file-" + sanitize(path.stem().string());
    return "http-" + sanitize(model);
}

std::string RetrieverSpec::label() const {
    if (kind == "dense") return "dense-" + (provider ? provider->label() : "default");
    if (kind == "selector") return "selector";
    return kind;
}

BackendSpec BackendSpec::parse(const std::string& shorthand) {
    BackendSpec spec;
    if (shorthand == "mock-echo" || shorthand == "mock_echo") {
        spec.kind = "mock_echo";
        return spec;
    }
    if (shorthand.rfind("mock-fixed:", 0) == 0 || shorthand.rfind("mock_fixed:", 0) == 0) {
        spec.kind = "mock_fixed";
        spec.text = shorthand.substr(11);
        return spec;
    }
    if (shorthand.rfind("http:", 0) == 0) {
        // http:ENDPOINT|MODEL
        const std::string rest = shorthand.substr(5);
        const auto bar = rest.find('|');
        if (bar == std::string::npos) throw Error("backend spec 'http:' needs ENDPOINT|MODEL");
        spec.kind = "http";
        spec.http.endpoint = rest.substr(0, bar);
        spec.http.model = rest.substr(bar + 1);
        return spec;
    }
    throw Error("unknown backend spec: " + shorthand);
}

namespace {

// One in-flight gate per HTTP backend identity, shared across every cell and
// pipeline of the process so the bound is global.
std::shared_ptr<InflightGate> gate_for(const HttpChatConfig& http) {
    static std::mutex mutex;
    static std::map<std::string, std::shared_ptr<InflightGate>> gates;
    const std::string key = http.endpoint + "|" + http.model;
    std::lock_guard<std::mutex> lock(mutex);
    auto& gate = gates[key];
    if (!gate) gate = std::make_shared<InflightGate>(static_cast<std::size_t>(
        http.max_inflight > 0 ? http.max_inflight : 1));
    return gate;
}

}  // namespace

std::shared_ptr<Backend> BackendSpec::instantiate() const {
    if (kind == "mock_echo") return std::make_shared<MockEchoBackend>();
    if (kind == "mock_fixed") return std::make_shared<MockFixedBackend>(text);
    if (kind == "http") return std::make_shared<HttpChatBackend>(http, gate_for(http));
    throw Error("unknown backend kind: " + kind);
}

std::string BackendSpec::label() const {
    if (kind == "mock_echo") return "mock-echo";
    if (kind == "mock_fixed") return "mock-fixed-" + sanitize(text);
    return "http-" + sanitize(http.model);
}

// ---------------------------------------------------------------------------
// Config (de)serialization
// ---------------------------------------------------------------------------
namespace {

ProviderSpec provider_from_json(const json& j) {
    if (j.is_string()) return ProviderSpec::parse(j.get<std::string>());
    ProviderSpec spec;
    spec.kind = j.at("kind").get<std::string>();
    if (j.contains("dim")) spec.dim = j.at("dim").get<std::size_t>();
    if (j.contains("endpoint")) spec.endpoint = j.at("endpoint").get<std::string>();
    if (j.contains("model")) spec.model = j.at("model").get<std::string>();
    if (j.contains("path")) spec.path = j.at("path").get<std::string>();
    return spec;
}

ordered_json provider_to_json(const ProviderSpec& spec) {
    ordered_json j;
    j["kind"] = spec.kind;
    if (spec.dim) j["dim"] = spec.dim;
    if (!spec.endpoint.empty()) j["endpoint"] = spec.endpoint;
    if (!spec.model.empty()) j["model"] = spec.model;
    if (!spec.path.empty()) j["path"] = spec.path.string();
    return j;
}

BackendSpec backend_from_json(const json& j) {
    if (j.is_string()) return BackendSpec::parse(j.get<std::string>());
    BackendSpec spec;
    spec.kind = j.at("kind").get<std::string>();
    if (j.contains("text")) spec.text = j.at("text").get<std::string>();
    if (spec.kind == "http") {
        spec.http.endpoint = j.at("endpoint").get<std::string>();
        spec.http.model = j.at("model").get<std::string>();
        if (j.contains("temperature")) spec.http.temperature = j.at("temperature").get<double>();
        if (j.contains("max_tokens")) spec.http.max_tokens = j.at("max_tokens").get<int>();
        if (j.contains("api_key_env")) spec.http.api_key_env = j.at("api_key_env").get<std::string>();
        if (j.contains("max_retries")) spec.http.max_retries = j.at("max_retries").get<int>();
        if (j.contains("backoff_initial_ms"))
            spec.http.backoff_initial_ms = j.at("backoff_initial_ms").get<int>();
        if (j.contains("max_inflight")) spec.http.max_inflight = j.at("max_inflight").get<int>();
    }
    return spec;
}

ordered_json backend_to_json(const BackendSpec& spec) {
    ordered_json j;
    j["kind"] = spec.kind;
    if (spec.kind == "mock_fixed") j["text"] = spec.text;
    if (spec.kind == "http") {
        j["endpoint"] = spec.http.endpoint;
        j["model"] = spec.http.model;
        j["temperature"] = spec.http.temperature;
        j["max_tokens"] = spec.http.max_tokens;
        if (!spec.http.api_key_env.empty()) j["api_key_env"] = spec.http.api_key_env;
        j["max_retries"] = spec.http.max_retries;
        j["backoff_initial_ms"] = spec.http.backoff_initial_ms;
        j["max_inflight"] = spec.http.max_inflight;
    }
    return j;
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
    const auto j = json::parse(text);
    RunConfig config;
    if (j.contains("run_id")) config.run_id = j.at("run_id").get<std::string>();
    if (j.contains("output_dir")) config.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("cache_dir")) config.cache_dir = j.at("cache_dir").get<std::string>();
    if (j.contains("k")) config.k = j.at("k").get<std::size_t>();
    if (j.contains("ask_negativity")) config.ask_negativity = j.at("ask_negativity").get<bool>();
    if (j.contains("negativity_mapping")) {
        const auto m = j.at("negativity_mapping").get<std::string>();
        if (m == "instruction_literal") {
            config.negativity_mapping = NegativityMapping::InstructionLiteral;
        } else if (m == "metric_prose") {
            config.negativity_mapping = NegativityMapping::MetricProse;
        } else {
            throw Error("unknown negativity_mapping: " + m);
        }
    }
    if (j.contains("concurrency")) config.concurrency = j.at("concurrency").get<std::size_t>();
    if (j.contains("parallel_cells")) {
        config.parallel_cells = j.at("parallel_cells").get<std::size_t>();
    }
    if (j.contains("instruction_override")) {
        config.instruction_override = j.at("instruction_override").get<std::string>();
    }

    for (const auto& d : j.at("datasets")) {
        DatasetSpec spec;
        spec.name = d.at("name").get<std::string>();
        spec.task = task_from_name(d.at("task").get<std::string>());
        spec.corpus_path = d.at("corpus").get<std::string>();
        spec.test_path = d.at("test").get<std::string>();
        if (d.contains("instruction")) spec.instruction = d.at("instruction").get<std::string>();
        if (d.contains("label_aim")) spec.label_aim = d.at("label_aim").get<std::string>();
        config.datasets.push_back(std::move(spec));
    }
    for (const auto& c : j.at("corpus_kinds")) {
        CorpusKindSpec spec;
        if (c.is_string()) {
            spec.kind = c.get<std::string>();
        } else {
            spec.kind = c.at("kind").get<std::string>();
            if (c.contains("rate")) spec.rate = c.at("rate").get<double>();
            if (c.contains("seed")) spec.seed = c.at("seed").get<std::uint64_t>();
        }
        static const std::set<std::string> known{"labeled", "unlabeled", "counterfactual",
                                                 "diverse", "negative"};
        if (!known.count(spec.kind)) throw Error("unknown corpus kind: " + spec.kind);
        config.corpus_kinds.push_back(std::move(spec));
    }
    for (const auto& r : j.at("retrievers")) {
        RetrieverSpec spec;
        if (r.is_string()) {
            spec.kind = r.get<std::string>();
        } else {
            spec.kind = r.at("kind").get<std::string>();
            if (r.contains("provider")) spec.provider = provider_from_json(r.at("provider"));
            if (r.contains("similarity")) spec.similarity = r.at("similarity").get<std::string>();
            if (r.contains("model")) spec.model_path = r.at("model").get<std::string>();
        }
        static const std::set<std::string> known{"bm25", "dense", "selector", "none"};
        if (!known.count(spec.kind)) throw Error("unknown retriever kind: " + spec.kind);
        config.retrievers.push_back(std::move(spec));
    }
    for (const auto& b : j.at("backends")) {
        config.backends.push_back(backend_from_json(b));
    }
    if (j.contains("correction")) {
        const auto& c = j.at("correction");
        config.correction.mode = c.value("mode", std::string("off"));
        static const std::set<std::string> known{"off", "retrieval_time", "corpus_rewrite"};
        if (!known.count(config.correction.mode)) {
            throw Error("unknown correction mode: " + config.correction.mode);
        }
        if (c.contains("judge")) config.correction.judge = backend_from_json(c.at("judge"));
    }
    return config;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    return from_json(read_file(path));
}

std::string RunConfig::to_json() const {
    ordered_json j;
    j["run_id"] = run_id;
    j["output_dir"] = output_dir.string();
    if (!cache_dir.empty()) j["cache_dir"] = cache_dir.string();
    j["k"] = k;
    j["ask_negativity"] = ask_negativity;
    j["negativity_mapping"] = negativity_mapping == NegativityMapping::InstructionLiteral
                                  ? "instruction_literal"
                                  : "metric_prose";
    j["concurrency"] = concurrency;
    j["parallel_cells"] = parallel_cells;
    if (instruction_override) j["instruction_override"] = *instruction_override;

    j["datasets"] = ordered_json::array();
    for (const auto& d : datasets) {
        ordered_json ds;
        ds["name"] = d.name;
        ds["task"] = task_name(d.task);
        ds["corpus"] = d.corpus_path.string();
        ds["test"] = d.test_path.string();
        if (d.instruction) ds["instruction"] = *d.instruction;
        if (d.label_aim) ds["label_aim"] = *d.label_aim;
        j["datasets"].push_back(ds);
    }
    j["corpus_kinds"] = ordered_json::array();
    for (const auto& c : corpus_kinds) {
        ordered_json ck;
        ck["kind"] = c.kind;
        if (c.kind == "counterfactual") ck["rate"] = c.rate;
        if (c.kind == "counterfactual" || c.kind == "negative") ck["seed"] = c.seed;
        j["corpus_kinds"].push_back(ck);
    }
    j["retrievers"] = ordered_json::array();
    for (const auto& r : retrievers) {
        ordered_json rt;
        rt["kind"] = r.kind;
        if (r.provider) rt["provider"] = provider_to_json(*r.provider);
        if (r.kind == "dense") rt["similarity"] = r.similarity;
        if (!r.model_path.empty()) rt["model"] = r.model_path.string();
        j["retrievers"].push_back(rt);
    }
    j["backends"] = ordered_json::array();
    for (const auto& b : backends) j["backends"].push_back(backend_to_json(b));

    ordered_json corr;
    corr["mode"] = correction.mode;
    if (correction.judge) corr["judge"] = backend_to_json(*correction.judge);
    j["correction"] = corr;
    return j.dump(2);
}

std::string RunConfig::config_hash() const {
    return fnv1a64_hex(to_json());
}

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------
std::vector<Cell> plan(const RunConfig& config) {
    if (config.datasets.empty()) throw Error("plan: no datasets configured");
    if (config.corpus_kinds.empty()) throw Error("plan: no corpus kinds configured");
    if (config.retrievers.empty()) throw Error("plan: no retrievers configured");
    if (config.backends.empty()) throw Error("plan: no backends configured");
    if (config.k == 0) throw Error("plan: k must be >= 1");
    for (const auto& r : config.retrievers) {
        if (r.kind == "selector" && r.model_path.empty()) {
            throw Error("plan: selector retriever requires a model path");
        }
        if ((r.kind == "dense" || r.kind == "selector") && !r.provider) {
            throw Error("plan: " + r.kind + " retriever requires a provider");
        }
    }
    if (config.correction.mode != "off" && !config.correction.judge) {
        throw Error("plan: correction mode '" + config.correction.mode + "' requires a judge");
    }

    std::vector<Cell> cells;
    std::set<std::string> ids;
    for (std::size_t d = 0; d < config.datasets.size(); ++d) {
        for (std::size_t ck = 0; ck < config.corpus_kinds.size(); ++ck) {
            for (std::size_t r = 0; r < config.retrievers.size(); ++r) {
                for (std::size_t b = 0; b < config.backends.size(); ++b) {
                    Cell cell{d, ck, r, b, ""};
                    cell.id = sanitize(config.datasets[d].name) + "__" +
                              sanitize(config.corpus_kinds[ck].label()) + "__" +
                              sanitize(config.retrievers[r].label()) + "__" +
                              sanitize(config.backends[b].label());
                    if (!ids.insert(cell.id).second) {
                        throw Error("plan: duplicate cell id: " + cell.id);
                    }
                    cells.push_back(std::move(cell));
                }
            }
        }
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------
std::string RunManifest::to_json() const {
    ordered_json j;
    j["run_id"] = run_id;
    j["config_hash"] = config_hash;
    j["cells"] = ordered_json::array();
    for (const auto& [cell, status] : cells) {
        ordered_json c;
        c["id"] = cell.id;
        c["dataset"] = cell.dataset;
        c["corpus_kind"] = cell.corpus_kind;
        c["retriever"] = cell.retriever;
        c["backend"] = cell.backend;
        c["state"] = status.state;
        if (!status.records_path.empty()) c["records"] = status.records_path;
        if (!status.metrics_path.empty()) c["metrics"] = status.metrics_path;
        if (!status.error.empty()) c["error"] = status.error;
        c["record_count"] = status.record_count;
        j["cells"].push_back(c);
    }
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    const auto j = json::parse(text);
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& c : j.at("cells")) {
        Cell cell;
        cell.id = c.at("id").get<std::string>();
        cell.dataset = c.at("dataset").get<std::size_t>();
        cell.corpus_kind = c.at("corpus_kind").get<std::size_t>();
        cell.retriever = c.at("retriever").get<std::size_t>();
        cell.backend = c.at("backend").get<std::size_t>();
        CellStatus status;
        status.state = c.at("state").get<std::string>();
        if (c.contains("records")) status.records_path = c.at("records").get<std::string>();
        if (c.contains("metrics")) status.metrics_path = c.at("metrics").get<std::string>();
        if (c.contains("error")) status.error = c.at("error").get<std::string>();
        status.record_count = c.at("record_count").get<std::size_t>();
        m.cells.emplace_back(std::move(cell), std::move(status));
    }
    return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
    atomic_write_file(path, to_json());
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    return from_json(read_file(path));
}

std::size_t RunManifest::done_count() const {
    std::size_t n = 0;
    for (const auto& [cell, status] : cells) {
        if (status.state == "done") ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------
namespace {

struct LoadedDataset {
    Corpus source;
    Corpus test;
};

// Built corpus variants are shared across the cells of one run.
struct VariantBuilder {
    const RunConfig& config;
    std::vector<LoadedDataset>& data;
    std::map<std::string, Corpus> built;
    std::mutex mutex;

    Corpus variant(std::size_t dataset, std::size_t kind_index) {
        const auto& spec = config.corpus_kinds[kind_index];
        const std::string key = std::to_string(dataset) + "/" + spec.label();
        std::lock_guard<std::mutex> lock(mutex);
        if (auto it = built.find(key); it != built.end()) return it->second;

        const Corpus& source = data[dataset].source;
        Corpus variant;
        PerturbManifest manifest;
        bool has_manifest = false;
        if (spec.kind == "labeled") {
            variant = source;
        } else if (spec.kind == "unlabeled") {
            variant = strip_labels(source);
        } else if (spec.kind == "counterfactual") {
            auto result = corrupt(source, spec.rate, spec.seed);
            variant = std::move(result.corpus);
            manifest = std::move(result.manifest);
            has_manifest = true;
        } else if (spec.kind == "negative") {
            auto result = make_negative_corpus(source, spec.seed);
            variant = std::move(result.corpus);
            manifest = std::move(result.manifest);
            has_manifest = true;
        } else if (spec.kind == "diverse") {
            std::vector<Corpus> others;
            for (std::size_t i = 0; i < data.size(); ++i) {
                if (i != dataset) others.push_back(data[i].source);
            }
            variant = merge_diverse(source, others);
        } else {
            throw Error("unknown corpus kind: " + spec.kind);
        }

        const auto dir = config.run_dir() / "corpora";
        const auto base = sanitize(config.datasets[dataset].name) + "__" + sanitize(spec.label());
        save_corpus(variant, dir / (base + ".jsonl"));
        if (has_manifest) manifest.save(dir / (base + ".manifest.jsonl"));
        return built.emplace(key, std::move(variant)).first->second;
    }

};

std::unique_ptr<Retriever> make_retriever(const RetrieverSpec& spec, const Corpus& corpus,
                                          std::shared_ptr<EmbeddingCache> cache) {
    if (spec.kind == "none" || corpus.kind.tag == CorpusKind::Tag::None ||
        corpus.entries.empty()) {
        return std::make_unique<NoneRetriever>();
    }
    if (spec.kind == "bm25") return std::make_unique<Bm25Retriever>(corpus);
    if (spec.kind == "dense") {
        const auto similarity = spec.similarity == "dot" ? Similarity::Dot : Similarity::Cosine;
        return std::make_unique<DenseRetriever>(corpus, spec.provider->instantiate(), similarity,
                                                cache);
    }
    if (spec.kind == "selector") {
        auto model = ProjectionModel::load(spec.model_path);
        return std::make_unique<SelectorRetriever>(corpus, spec.provider->instantiate(),
                                                   std::move(model), cache);
    }
    throw Error("unknown retriever kind: " + spec.kind);
}

}  // namespace

RetrieverSpec retriever_spec_from_json(const std::string& text) {
    const auto j = json::parse(text);
    RetrieverSpec spec;
    if (j.is_string()) {
        spec.kind = j.get<std::string>();
        return spec;
    }
    spec.kind = j.at("kind").get<std::string>();
    if (j.contains("provider")) spec.provider = provider_from_json(j.at("provider"));
    if (j.contains("similarity")) spec.similarity = j.at("similarity").get<std::string>();
    if (j.contains("model")) spec.model_path = j.at("model").get<std::string>();
    return spec;
}

BackendSpec backend_spec_from_json(const std::string& text) {
    return backend_from_json(json::parse(text));
}

std::unique_ptr<Retriever> build_retriever(const RetrieverSpec& spec, const Corpus& corpus,
                                           std::shared_ptr<EmbeddingCache> cache) {
    return make_retriever(spec, corpus, std::move(cache));
}

RunManifest execute(const RunConfig& config, const std::vector<Cell>& cells,
                    const ExecuteOptions& options) {
    const auto run_dir = config.run_dir();
    std::filesystem::create_directories(run_dir);
    const auto manifest_path = run_dir / "manifest.json";

    RunManifest manifest;
    if (options.resume && std::filesystem::exists(manifest_path)) {
        manifest = RunManifest::load(manifest_path);
        if (manifest.config_hash != config.config_hash()) {
            throw Error("execute: run directory holds a different config (hash " +
                        manifest.config_hash + " != " + config.config_hash() + ")");
        }
    } else {
        manifest.run_id = config.run_id;
        manifest.config_hash = config.config_hash();
        for (const auto& cell : cells) manifest.cells.emplace_back(cell, CellStatus{});
    }
    if (manifest.cells.size() != cells.size()) {
        throw Error("execute: manifest cell count does not match the plan");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (manifest.cells[i].first.id != cells[i].id) {
            throw Error("execute: manifest cell order does not match the plan at " + cells[i].id);
        }
    }

    // Load datasets once.
    std::vector<LoadedDataset> data;
    for (const auto& spec : config.datasets) {
        LoadedDataset d;
        d.source = load_corpus(spec.corpus_path, spec.task);
        d.source.name = spec.name;
        d.test = load_corpus(spec.test_path, spec.task);
        d.test.name = spec.name + "-test";
        if (d.source.kind.tag != CorpusKind::Tag::Labeled) {
            throw Error("execute: dataset " + spec.name + " source corpus must be labeled");
        }
        data.push_back(std::move(d));
    }

    VariantBuilder variants{config, data, {}, {}};
    auto cache_dir = config.cache_dir.empty() ? run_dir / "cache" : config.cache_dir;
    auto embedding_cache = std::make_shared<EmbeddingCache>(cache_dir / "embeddings");
    GenerationCache generation_cache(cache_dir);

    auto run_cell = [&](const Cell& cell, CellStatus& status) {
        const auto cell_dir = run_dir / "cells" / cell.id;
        const auto records_path = cell_dir / "records.jsonl";
        const auto metrics_path = cell_dir / "metrics.json";
        status.records_path = records_path.string();
        status.metrics_path = metrics_path.string();

        try {
            const auto& dataset = config.datasets[cell.dataset];
            const auto& retriever_spec = config.retrievers[cell.retriever];
            const auto& kind_spec = config.corpus_kinds[cell.corpus_kind];
            const auto& test = data[cell.dataset].test;

            Corpus corpus;
            if (retriever_spec.kind == "none") {
                // Retrieval disabled: the cell runs the bare LLM.
                corpus.name = dataset.name;
                corpus.task = dataset.task;
                corpus.kind = CorpusKind::none();
            } else {
                corpus = variants.variant(cell.dataset, cell.corpus_kind);
            }

            auto retriever = make_retriever(retriever_spec, corpus, embedding_cache);
            auto backend = config.backends[cell.backend].instantiate();

            PipelineConfig pipeline;
            pipeline.k = config.k;
            pipeline.ask_negativity = config.ask_negativity || kind_spec.kind == "negative";
            pipeline.negativity_mapping = config.negativity_mapping;
            pipeline.instruction_override =
                dataset.instruction ? dataset.instruction : config.instruction_override;
            pipeline.records_path = records_path;
            pipeline.resume = true;
            pipeline.concurrency = config.concurrency;

            std::unique_ptr<CorrectionLayer> correction;
            if (config.correction.mode == "retrieval_time" &&
                corpus.kind.tag != CorpusKind::Tag::None) {
                correction = std::make_unique<CorrectionLayer>(
                    config.correction.judge->instantiate(), corpus, &generation_cache,
                    cell_dir / "corrections.jsonl");
                if (dataset.label_aim) correction->set_dataset_aim(*dataset.label_aim);
                pipeline.transform = correction->transform();
            } else if (config.correction.mode == "corpus_rewrite" &&
                       corpus.kind.tag != CorpusKind::Tag::None && !corpus.entries.empty()) {
                auto judge = config.correction.judge->instantiate();
                auto rewritten = correct_corpus(corpus, *judge, &generation_cache);
                std::string log;
                for (const auto& o : rewritten.outcomes) log += o.to_json() + "\n";
                atomic_write_file(cell_dir / "corrections.jsonl", log);
                corpus = std::move(rewritten.corpus);
                retriever = make_retriever(retriever_spec, corpus, embedding_cache);
            }

            const auto records =
                run_pipeline(test, corpus, *retriever, *backend, pipeline, &generation_cache);
            if (records.size() != test.entries.size()) {
                throw Error("cell produced " + std::to_string(records.size()) + " records for " +
                            std::to_string(test.entries.size()) + " test instances");
            }
            // Scattered per-instance failures leave a usable cell; a fully
            // failed cell is systemic and reruns on the next resume.
            if (!records.empty() &&
                std::all_of(records.begin(), records.end(),
                            [](const GenerationRecord& r) { return r.error.has_value(); })) {
                throw Error("all " + std::to_string(records.size()) +
                            " records failed; first error: " + *records.front().error);
            }

            const auto report = score_records(dataset.task, records, test.label_space);
            MetricReport annotated = report;
            annotated.corpus_kind = kind_spec.label();
            annotated.retriever = retriever_spec.label();
            annotated.backend = config.backends[cell.backend].label();
            atomic_write_file(metrics_path, annotated.to_json());

            status.state = "done";
            status.record_count = records.size();
            status.error.clear();
        } catch (const std::exception& e) {
            status.state = "failed";
            status.error = e.what();
        }
    };

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < manifest.cells.size(); ++i) {
        if (manifest.cells[i].second.state == "done") continue;
        if (pending.size() >= options.max_cells) break;
        pending.push_back(i);
    }

    if (config.parallel_cells <= 1) {
        for (const auto i : pending) {
            run_cell(manifest.cells[i].first, manifest.cells[i].second);
            manifest.save(manifest_path);
        }
    } else {
        // Corpus variants build up front so the shared builder map stays
        // read-only while cells run concurrently.
        for (const auto i : pending) {
            const auto& cell = manifest.cells[i].first;
            if (config.retrievers[cell.retriever].kind == "none") continue;
            try {
                variants.variant(cell.dataset, cell.corpus_kind);
            } catch (const std::exception&) {
                // The cell itself reports the failure.
            }
        }
        for (std::size_t start = 0; start < pending.size(); start += config.parallel_cells) {
            const auto end = std::min(pending.size(), start + config.parallel_cells);
            std::vector<std::future<void>> wave;
            for (std::size_t w = start; w < end; ++w) {
                const auto i = pending[w];
                wave.push_back(std::async(std::launch::async, [&, i] {
                    run_cell(manifest.cells[i].first, manifest.cells[i].second);
                }));
            }
            for (auto& f : wave) f.get();
            manifest.save(manifest_path);
        }
    }
    manifest.save(manifest_path);
    return manifest;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------
namespace {

std::string percent(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", value * 100.0);
    return buf;
}

}  // namespace

ReportPaths write_report(const RunConfig& config, const RunManifest& manifest) {
    if (manifest.done_count() == 0) throw Error("write_report: no done cells");
    const auto run_dir = config.run_dir();

    // Recompute everything from the persisted records.
    struct CellMetrics {
        const Cell* cell;
        MetricReport report;
    };
    std::vector<CellMetrics> rows;
    for (const auto& [cell, status] : manifest.cells) {
        if (status.state != "done") continue;
        const auto& dataset = config.datasets[cell.dataset];
        const auto records = load_records(status.records_path);
        auto test = load_corpus(dataset.test_path, dataset.task);
        auto report = score_records(dataset.task, records, test.label_space);
        report.corpus_kind = config.corpus_kinds[cell.corpus_kind].label();
        report.retriever = config.retrievers[cell.retriever].label();
        report.backend = config.backends[cell.backend].label();
        rows.push_back({&cell, std::move(report)});
    }

    // Markdown: one grid per backend (rows: corpus kind x retriever, columns:
    // datasets), then the awareness table.
    std::string md = "# Run report: " + config.run_id + "\n\n";
    for (std::size_t b = 0; b < config.backends.size(); ++b) {
        std::vector<const CellMetrics*> mine;
        for (const auto& row : rows) {
            if (row.cell->backend == b) mine.push_back(&row);
        }
        if (mine.empty()) continue;
        md += "## Backend: " + config.backends[b].label() + "\n\n";
        md += "Primary metric per cell (micro F1; macro F1 for NLI/QA), in percent.\n\n";
        md += "| Corpus | Retriever |";
        for (const auto& d : config.datasets) md += " " + d.name + " |";
        md += "\n|---|---|";
        for (std::size_t i = 0; i < config.datasets.size(); ++i) md += "---|";
        md += "\n";
        for (std::size_t ck = 0; ck < config.corpus_kinds.size(); ++ck) {
            for (std::size_t r = 0; r < config.retrievers.size(); ++r) {
                std::vector<std::string> values(config.datasets.size(), "");
                bool any = false;
                for (const auto* row : mine) {
                    if (row->cell->corpus_kind == ck && row->cell->retriever == r) {
                        values[row->cell->dataset] = percent(row->report.primary_metric());
                        any = true;
                    }
                }
                if (!any) continue;
                md += "| " + config.corpus_kinds[ck].label() + " | " +
                      config.retrievers[r].label() + " |";
                for (const auto& v : values) md += " " + (v.empty() ? std::string("-") : v) + " |";
                md += "\n";
            }
        }
        md += "\n";
    }

    // Awareness table over cells that carry negativity claims.
    std::string awareness;
    for (const auto& row : rows) {
        if (!row.report.awareness) continue;
        const auto& a = *row.report.awareness;
        awareness += "| " + config.datasets[row.cell->dataset].name + " | " +
                     row.report.corpus_kind + " | " + row.report.retriever + " | " +
                     row.report.backend + " | " +
                     (a.true_rate ? percent(*a.true_rate) : std::string("—")) + " | " +
                     (a.fake_rate ? percent(*a.fake_rate) : std::string("—")) + " |\n";
    }
    if (!awareness.empty()) {
        md += "## Negative awareness\n\n";
        md += "| Dataset | Corpus | Retriever | Backend | True negative awareness rate | "
              "Fake negative awareness rate |\n|---|---|---|---|---|---|\n";
        md += awareness;
        md += "\n";
    }

    // CSV: long format with every metric.
    std::string csv = "dataset,corpus_kind,retriever,backend,metric,value\n";
    for (const auto& row : rows) {
        const std::string prefix = config.datasets[row.cell->dataset].name + "," +
                                   row.report.corpus_kind + "," + row.report.retriever + "," +
                                   row.report.backend + ",";
        for (const auto& [name, value] : row.report.values) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", value);
            csv += prefix + name + "," + buf + "\n";
        }
        if (row.report.awareness) {
            const auto& a = *row.report.awareness;
            auto fraction = [](const std::optional<double>& v) {
                if (!v) return std::string();
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.6f", *v);
                return std::string(buf);
            };
            csv += prefix + "true_negative_awareness_rate," + fraction(a.true_rate) + "\n";
            csv += prefix + "fake_negative_awareness_rate," + fraction(a.fake_rate) + "\n";
        }
    }

    // Aggregated machine-readable view alongside the per-cell files.
    std::string aggregated = "[\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nlohmann::ordered_json cell_json =
            nlohmann::ordered_json::parse(rows[i].report.to_json());
        nlohmann::ordered_json entry;
        entry["cell"] = rows[i].cell->id;
        entry["dataset"] = config.datasets[rows[i].cell->dataset].name;
        for (auto& [key, value] : cell_json.items()) entry[key] = value;
        aggregated += entry.dump(2);
        aggregated += i + 1 < rows.size() ? ",\n" : "\n";
    }
    aggregated += "]\n";
    atomic_write_file(run_dir / "metrics.json", aggregated);

    ReportPaths paths{run_dir / "report.md", run_dir / "report.csv"};
    atomic_write_file(paths.markdown, md);
    atomic_write_file(paths.csv, csv);
    return paths;
}

}  // namespace ralbench
