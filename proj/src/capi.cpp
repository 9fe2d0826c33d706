#include "ralbench.h"

#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "ralbench/perturb.hpp"
#include "ralbench/runner.hpp"

using namespace ralbench;

struct rb_corpus {
    Corpus corpus;
};

struct rb_retriever {
    std::unique_ptr<Retriever> retriever;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

rb_status fail(rb_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

// Runs the body, translating exceptions into status codes.
template <typename Fn>
rb_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        return fail(RB_ERROR_PARSE, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(RB_ERROR_IO, e.what());
    } catch (const Error& e) {
        return fail(RB_ERROR_PRECONDITION, e.what());
    } catch (const std::exception& e) {
        return fail(RB_ERROR_INTERNAL, e.what());
    }
}

rb_status require(bool ok, const char* what) {
    return ok ? RB_OK : fail(RB_ERROR_INVALID_ARGUMENT, std::string("null argument: ") + what);
}

}  // namespace

extern "C" {

const char* rb_version(void) {
    return "0.1.0";
}

const char* rb_last_error(void) {
    return g_last_error.c_str();
}

void rb_string_free(char* s) {
    std::free(s);
}

rb_status rb_corpus_open(const char* path, const char* task, rb_corpus** out) {
    if (auto st = require(path && task && out, "rb_corpus_open")) return st;
    return guarded([&] {
        auto corpus = load_corpus(path, task_from_name(task));
        *out = new rb_corpus{std::move(corpus)};
        return RB_OK;
    });
}

rb_status rb_corpus_save(const rb_corpus* corpus, const char* path) {
    if (auto st = require(corpus && path, "rb_corpus_save")) return st;
    return guarded([&] {
        save_corpus(corpus->corpus, path);
        return RB_OK;
    });
}

void rb_corpus_close(rb_corpus* corpus) {
    delete corpus;
}

int64_t rb_corpus_count(const rb_corpus* corpus) {
    return corpus ? static_cast<int64_t>(corpus->corpus.size()) : -1;
}

rb_status rb_corpus_kind(const rb_corpus* corpus, char** out_kind) {
    if (auto st = require(corpus && out_kind, "rb_corpus_kind")) return st;
    *out_kind = dup_string(corpus->corpus.kind.to_string());
    return RB_OK;
}

rb_status rb_corpus_strip_labels(const rb_corpus* corpus, rb_corpus** out) {
    if (auto st = require(corpus && out, "rb_corpus_strip_labels")) return st;
    return guarded([&] {
        *out = new rb_corpus{strip_labels(corpus->corpus)};
        return RB_OK;
    });
}

rb_status rb_corpus_corrupt(const rb_corpus* corpus, double rate, uint64_t seed,
                            int negative_awareness, rb_corpus** out, char** out_manifest_jsonl) {
    if (auto st = require(corpus && out, "rb_corpus_corrupt")) return st;
    return guarded([&] {
        auto result = negative_awareness ? make_negative_corpus(corpus->corpus, seed)
                                         : corrupt(corpus->corpus, rate, seed);
        *out = new rb_corpus{std::move(result.corpus)};
        if (out_manifest_jsonl) *out_manifest_jsonl = dup_string(result.manifest.to_jsonl());
        return RB_OK;
    });
}

rb_status rb_corpus_merge_diverse(const rb_corpus* target, const rb_corpus* const* others,
                                  size_t n_others, rb_corpus** out) {
    if (auto st = require(target && out && (others || n_others == 0), "rb_corpus_merge_diverse"))
        return st;
    return guarded([&] {
        std::vector<Corpus> sources;
        sources.reserve(n_others);
        for (size_t i = 0; i < n_others; ++i) {
            if (!others[i]) throw Error("merge_diverse: null corpus handle");
            sources.push_back(others[i]->corpus);
        }
        *out = new rb_corpus{merge_diverse(target->corpus, sources)};
        return RB_OK;
    });
}

rb_status rb_retriever_open(const rb_corpus* corpus, const char* config_json, rb_retriever** out) {
    if (auto st = require(corpus && config_json && out, "rb_retriever_open")) return st;
    return guarded([&] {
        const auto spec = retriever_spec_from_json(config_json);
        *out = new rb_retriever{build_retriever(spec, corpus->corpus)};
        return RB_OK;
    });
}

void rb_retriever_close(rb_retriever* retriever) {
    delete retriever;
}

rb_status rb_retriever_query(rb_retriever* retriever, const char* query_text, int32_t k,
                             char** out_hits_json) {
    if (auto st = require(retriever && query_text && out_hits_json, "rb_retriever_query"))
        return st;
    if (k < 1) return fail(RB_ERROR_INVALID_ARGUMENT, "k must be >= 1");
    return guarded([&] {
        const auto hits = retriever->retriever->query(query_text, static_cast<std::size_t>(k));
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& h : hits) {
            rows.push_back({{"id", h.id}, {"score", h.score}, {"rank", h.rank}});
        }
        *out_hits_json = dup_string(rows.dump());
        return RB_OK;
    });
}

rb_status rb_default_instruction(const char* task, char** out_text) {
    if (auto st = require(task && out_text, "rb_default_instruction")) return st;
    return guarded([&] {
        *out_text = dup_string(default_instruction(task_from_name(task)));
        return RB_OK;
    });
}

rb_status rb_parse_answer(const char* task, const char* raw, const char* label_space_json,
                          char** out_answer_json) {
    if (auto st = require(task && raw && out_answer_json, "rb_parse_answer")) return st;
    return guarded([&] {
        std::set<std::string> space;
        if (label_space_json) {
            for (const auto& l : nlohmann::json::parse(label_space_json)) {
                space.insert(l.get<std::string>());
            }
        }
        const auto answer =
            parse_answer(task_from_name(task), raw, label_space_json ? &space : nullptr);
        const char* kind = "none";
        switch (answer.kind) {
            case ParsedAnswer::Kind::NoAnswer: kind = "none"; break;
            case ParsedAnswer::Kind::Label: kind = "label"; break;
            case ParsedAnswer::Kind::Option: kind = "option"; break;
            case ParsedAnswer::Kind::TripleAnswer: kind = "triple"; break;
        }
        nlohmann::ordered_json j;
        j["kind"] = kind;
        j["text"] = answer.to_text();
        *out_answer_json = dup_string(j.dump());
        return RB_OK;
    });
}

rb_status rb_run_matrix(const char* config_json, int resume, char** out_manifest_json) {
    if (auto st = require(config_json, "rb_run_matrix")) return st;
    return guarded([&] {
        const auto config = RunConfig::from_json(config_json);
        const auto cells = plan(config);
        ExecuteOptions options;
        options.resume = resume != 0;
        const auto manifest = execute(config, cells, options);
        // Persisted so report generation can rebuild the axes later.
        atomic_write_file(config.run_dir() / "config.json", config.to_json());
        if (out_manifest_json) *out_manifest_json = dup_string(manifest.to_json());
        return RB_OK;
    });
}

rb_status rb_score_records(const char* records_path, const char* options_json,
                           char** out_metrics_json) {
    if (auto st = require(records_path && options_json && out_metrics_json, "rb_score_records"))
        return st;
    return guarded([&] {
        const auto options = nlohmann::json::parse(options_json);
        const auto task = task_from_name(options.at("task").get<std::string>());
        std::optional<std::set<std::string>> space;
        if (options.contains("label_space")) {
            space.emplace();
            for (const auto& l : options.at("label_space")) space->insert(l.get<std::string>());
        }
        const auto records = load_records(records_path);
        const auto report = score_records(task, records, space);
        *out_metrics_json = dup_string(report.to_json());
        return RB_OK;
    });
}

rb_status rb_correct_corpus(const char* config_json, char** out_summary_json) {
    if (auto st = require(config_json, "rb_correct_corpus")) return st;
    return guarded([&] {
        const auto config = nlohmann::json::parse(config_json);
        const auto task = task_from_name(config.at("task").get<std::string>());
        auto corpus = load_corpus(config.at("in").get<std::string>(), task);
        auto judge = backend_spec_from_json(config.at("judge").dump()).instantiate();

        std::unique_ptr<GenerationCache> cache;
        if (config.contains("cache_dir")) {
            cache = std::make_unique<GenerationCache>(
                std::filesystem::path(config.at("cache_dir").get<std::string>()));
        }
        auto result = correct_corpus(corpus, *judge, cache.get());
        save_corpus(result.corpus, config.at("out").get<std::string>());

        std::size_t revised = 0;
        std::string log;
        for (const auto& o : result.outcomes) {
            if (o.revised_value) ++revised;
            log += o.to_json() + "\n";
        }
        if (config.contains("log")) {
            atomic_write_file(config.at("log").get<std::string>(), log);
        }
        if (out_summary_json) {
            nlohmann::ordered_json j;
            j["entries"] = result.corpus.size();
            j["judged"] = result.outcomes.size();
            j["revised"] = revised;
            *out_summary_json = dup_string(j.dump());
        }
        return RB_OK;
    });
}

rb_status rb_train_selector(const char* config_json, char** out_summary_json) {
    if (auto st = require(config_json, "rb_train_selector")) return st;
    return guarded([&] {
        const auto config = nlohmann::json::parse(config_json);
        const auto task = task_from_name(config.at("task").get<std::string>());
        const auto corpus = load_corpus(config.at("corpus").get<std::string>(), task);
        const auto provider_spec = ProviderSpec::parse(config.at("provider").get<std::string>());
        auto provider = provider_spec.instantiate();

        TrainConfig train_config;
        if (config.contains("learning_rate"))
            train_config.learning_rate = config.at("learning_rate").get<double>();
        if (config.contains("epochs")) train_config.epochs = config.at("epochs").get<std::size_t>();
        if (config.contains("batch_size"))
            train_config.batch_size = config.at("batch_size").get<std::size_t>();
        if (config.contains("negatives_per_anchor"))
            train_config.negatives_per_anchor =
                config.at("negatives_per_anchor").get<std::size_t>();
        if (config.contains("margin")) train_config.margin = config.at("margin").get<double>();
        if (config.contains("seed")) train_config.seed = config.at("seed").get<std::uint64_t>();

        const auto built = build_triplets(corpus, *provider, train_config.negatives_per_anchor,
                                          train_config.seed);
        auto result = train(built.triplets, train_config, provider->dimension());
        result.model.set_provider_id(provider->id());
        result.model.save(config.at("out").get<std::string>());

        if (out_summary_json) {
            nlohmann::ordered_json j;
            j["triplets"] = built.triplets.size();
            j["initial_loss"] = result.loss_trace.front();
            j["final_loss"] = result.loss_trace.back();
            j["epochs"] = train_config.epochs;
            *out_summary_json = dup_string(j.dump());
        }
        return RB_OK;
    });
}

rb_status rb_write_report(const char* run_dir, char** out_paths_json) {
    if (auto st = require(run_dir, "rb_write_report")) return st;
    return guarded([&] {
        const std::filesystem::path dir(run_dir);
        const auto config = RunConfig::from_file(dir / "config.json");
        const auto manifest = RunManifest::load(dir / "manifest.json");
        const auto paths = write_report(config, manifest);
        if (out_paths_json) {
            nlohmann::ordered_json j;
            j["markdown"] = paths.markdown.string();
            j["csv"] = paths.csv.string();
            *out_paths_json = dup_string(j.dump());
        }
        return RB_OK;
    });
}

}  // extern "C"
