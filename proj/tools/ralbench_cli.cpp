// ralbench command-line front end. Everything goes through the shared
// library's C API (ralbench.h); this translation unit never touches the core
// C++ headers.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <ralbench.h>

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

int report_failure(rb_status status) {
    std::fprintf(stderr, "error (%d): %s\n", static_cast<int>(status), rb_last_error());
    return 1;
}

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { rb_string_free(ptr); }
};

struct OwnedCorpus {
    rb_corpus* ptr = nullptr;
    ~OwnedCorpus() { rb_corpus_close(ptr); }
};

int cmd_ingest(const std::string& in, const std::string& task, const std::string& out) {
    OwnedCorpus corpus;
    if (auto st = rb_corpus_open(in.c_str(), task.c_str(), &corpus.ptr)) {
        return report_failure(st);
    }
    if (auto st = rb_corpus_save(corpus.ptr, out.c_str())) return report_failure(st);
    OwnedString kind;
    rb_corpus_kind(corpus.ptr, &kind.ptr);
    std::printf("ingested %lld records (%s) -> %s\n",
                static_cast<long long>(rb_corpus_count(corpus.ptr)),
                kind.ptr ? kind.ptr : "?", out.c_str());
    return 0;
}

int cmd_build_corpus(const std::string& kind, const std::string& in, const std::string& task,
                     const std::string& out, double rate, std::uint64_t seed,
                     const std::vector<std::string>& others) {
    OwnedCorpus source;
    if (auto st = rb_corpus_open(in.c_str(), task.c_str(), &source.ptr)) {
        return report_failure(st);
    }

    OwnedCorpus built;
    OwnedString manifest;
    if (kind == "unlabeled") {
        if (auto st = rb_corpus_strip_labels(source.ptr, &built.ptr)) return report_failure(st);
    } else if (kind == "counterfactual" || kind == "negative") {
        const int negative = kind == "negative" ? 1 : 0;
        if (auto st = rb_corpus_corrupt(source.ptr, rate, seed, negative, &built.ptr,
                                        &manifest.ptr)) {
            return report_failure(st);
        }
    } else if (kind == "diverse") {
        // Each entry is "task:path".
        std::vector<OwnedCorpus> loaded(others.size());
        std::vector<const rb_corpus*> handles;
        for (std::size_t i = 0; i < others.size(); ++i) {
            const auto colon = others[i].find(':');
            if (colon == std::string::npos) {
                std::fprintf(stderr, "--others entries must be task:path, got %s\n",
                             others[i].c_str());
                return 1;
            }
            const auto other_task = others[i].substr(0, colon);
            const auto path = others[i].substr(colon + 1);
            if (auto st = rb_corpus_open(path.c_str(), other_task.c_str(), &loaded[i].ptr)) {
                return report_failure(st);
            }
            handles.push_back(loaded[i].ptr);
        }
        if (auto st = rb_corpus_merge_diverse(source.ptr, handles.data(), handles.size(),
                                              &built.ptr)) {
            return report_failure(st);
        }
    } else {
        std::fprintf(stderr, "unknown kind: %s\n", kind.c_str());
        return 1;
    }

    if (auto st = rb_corpus_save(built.ptr, out.c_str())) return report_failure(st);
    if (manifest.ptr && *manifest.ptr) {
        const std::string manifest_path = out + ".manifest.jsonl";
        FILE* f = std::fopen(manifest_path.c_str(), "wb");
        if (!f) {
            std::fprintf(stderr, "cannot write %s\n", manifest_path.c_str());
            return 1;
        }
        std::fputs(manifest.ptr, f);
        std::fclose(f);
        std::printf("manifest -> %s\n", manifest_path.c_str());
    }
    OwnedString built_kind;
    rb_corpus_kind(built.ptr, &built_kind.ptr);
    std::printf("built %s corpus with %lld records -> %s\n",
                built_kind.ptr ? built_kind.ptr : kind.c_str(),
                static_cast<long long>(rb_corpus_count(built.ptr)), out.c_str());
    return 0;
}

int cmd_retrieve(const std::string& corpus_path, const std::string& task,
                 const std::string& retriever, const std::string& provider,
                 const std::string& model, const std::string& query, int k) {
    OwnedCorpus corpus;
    if (auto st = rb_corpus_open(corpus_path.c_str(), task.c_str(), &corpus.ptr)) {
        return report_failure(st);
    }
    ordered_json config;
    config["kind"] = retriever;
    if (!provider.empty()) config["provider"] = provider;
    if (!model.empty()) config["model"] = model;

    rb_retriever* handle = nullptr;
    if (auto st = rb_retriever_open(corpus.ptr, config.dump().c_str(), &handle)) {
        return report_failure(st);
    }
    OwnedString hits;
    const auto st = rb_retriever_query(handle, query.c_str(), k, &hits.ptr);
    rb_retriever_close(handle);
    if (st) return report_failure(st);
    std::printf("%s\n", hits.ptr);
    return 0;
}

int cmd_run(const std::string& config_path, bool resume) {
    std::string config_text;
    {
        std::FILE* f = std::fopen(config_path.c_str(), "rb");
        if (!f) {
            std::fprintf(stderr, "cannot open config: %s\n", config_path.c_str());
            return 1;
        }
        char buf[4096];
        std::size_t got;
        while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) config_text.append(buf, got);
        std::fclose(f);
    }
    OwnedString manifest;
    if (auto st = rb_run_matrix(config_text.c_str(), resume ? 1 : 0, &manifest.ptr)) {
        return report_failure(st);
    }
    const auto parsed = json::parse(manifest.ptr ? std::string(manifest.ptr) : std::string("{}"));
    std::size_t done = 0, failed = 0, pending = 0;
    for (const auto& cell : parsed.at("cells")) {
        const auto state = cell.at("state").get<std::string>();
        if (state == "done") ++done;
        else if (state == "failed") ++failed;
        else ++pending;
        if (state == "failed") {
            std::fprintf(stderr, "failed cell %s: %s\n", cell.at("id").get<std::string>().c_str(),
                         cell.value("error", std::string()).c_str());
        }
    }
    std::printf("run %s: %zu done, %zu failed, %zu pending\n",
                parsed.at("run_id").get<std::string>().c_str(), done, failed, pending);
    return failed == 0 ? 0 : 2;
}

int cmd_score(const std::string& records, const std::string& task,
              const std::vector<std::string>& labels) {
    ordered_json options;
    options["task"] = task;
    if (!labels.empty()) options["label_space"] = labels;
    OwnedString metrics;
    if (auto st = rb_score_records(records.c_str(), options.dump().c_str(), &metrics.ptr)) {
        return report_failure(st);
    }
    std::printf("%s\n", metrics.ptr);
    return 0;
}

int cmd_correct_corpus(const std::string& in, const std::string& out, const std::string& task,
                       const std::string& judge, const std::string& log,
                       const std::string& cache_dir) {
    ordered_json config;
    config["task"] = task;
    config["in"] = in;
    config["out"] = out;
    config["judge"] = judge;
    if (!log.empty()) config["log"] = log;
    if (!cache_dir.empty()) config["cache_dir"] = cache_dir;
    OwnedString summary;
    if (auto st = rb_correct_corpus(config.dump().c_str(), &summary.ptr)) {
        return report_failure(st);
    }
    std::printf("%s\n", summary.ptr);
    return 0;
}

int cmd_train_selector(const std::string& corpus, const std::string& task,
                       const std::string& provider, const std::string& out, double lr,
                       std::size_t epochs, std::size_t batch, std::size_t negatives,
                       double margin, std::uint64_t seed) {
    ordered_json config;
    config["task"] = task;
    config["corpus"] = corpus;
    config["provider"] = provider;
    config["out"] = out;
    config["learning_rate"] = lr;
    config["epochs"] = epochs;
    config["batch_size"] = batch;
    config["negatives_per_anchor"] = negatives;
    config["margin"] = margin;
    config["seed"] = seed;
    OwnedString summary;
    if (auto st = rb_train_selector(config.dump().c_str(), &summary.ptr)) {
        return report_failure(st);
    }
    std::printf("%s\n", summary.ptr);
    return 0;
}

int cmd_report(const std::string& run_dir) {
    OwnedString paths;
    if (auto st = rb_write_report(run_dir.c_str(), &paths.ptr)) return report_failure(st);
    std::printf("%s\n", paths.ptr);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ralbench: retrieval-augmented LM robustness harness"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(rb_version()));

    std::string in, out, task = "text_classification", kind, corpus_path, retriever = "bm25";
    std::string provider, model, query, config_path, records, judge, log, cache_dir, run_dir;
    std::vector<std::string> others, labels;
    double rate = 0.8, lr = 0.05, margin = 1.0;
    std::uint64_t seed = 0;
    std::size_t epochs = 20, batch = 32, negatives = 4;
    int k = 1;
    bool no_resume = false;

    auto* ingest = app.add_subcommand("ingest", "Validate and canonicalize a corpus file");
    ingest->add_option("--in", in, "input corpus (jsonl)")->required();
    ingest->add_option("--task", task, "task kind")->required();
    ingest->add_option("--out", out, "canonical output path")->required();

    auto* build = app.add_subcommand("build-corpus", "Build a perturbed testbed corpus");
    build->add_option("--kind", kind, "unlabeled|counterfactual|diverse|negative")->required();
    build->add_option("--in", in, "source labeled corpus")->required();
    build->add_option("--task", task, "task kind")->required();
    build->add_option("--out", out, "output corpus path")->required();
    build->add_option("--rate", rate, "counterfactual rate in (0,1]");
    build->add_option("--seed", seed, "corruption seed");
    build->add_option("--others", others, "diverse sources as task:path")->expected(-1);

    auto* retrieve = app.add_subcommand("retrieve", "Query a corpus with a retriever");
    retrieve->add_option("--corpus", corpus_path, "corpus path")->required();
    retrieve->add_option("--task", task, "task kind")->required();
    retrieve->add_option("--retriever", retriever, "bm25|dense|selector|none");
    retrieve->add_option("--provider", provider, "fixture:DIM | file:PATH | http:EP|MODEL|DIM");
    retrieve->add_option("--model", model, "selector model path");
    retrieve->add_option("--query", query, "query text")->required();
    retrieve->add_option("--k", k, "number of hits");

    auto* run = app.add_subcommand("run", "Execute the experiment matrix from a config file");
    run->add_option("--config", config_path, "run config (json)")->required();
    run->add_flag("--no-resume", no_resume, "start over instead of resuming");

    auto* score = app.add_subcommand("score", "Recompute metrics for a records file");
    score->add_option("--records", records, "records.jsonl path")->required();
    score->add_option("--task", task, "task kind")->required();
    score->add_option("--label", labels, "label space member (repeatable)")->expected(-1);

    auto* correct = app.add_subcommand("correct-corpus", "Detect-and-correct a corpus offline");
    correct->add_option("--in", in, "input corpus")->required();
    correct->add_option("--out", out, "output corpus")->required();
    correct->add_option("--task", task, "task kind")->required();
    correct->add_option("--judge", judge, "judge backend spec")->required();
    correct->add_option("--log", log, "outcome log path");
    correct->add_option("--cache", cache_dir, "judge response cache directory");

    auto* trainsel = app.add_subcommand("train-selector", "Train the triplet-loss selector");
    trainsel->add_option("--corpus", corpus_path, "training corpus")->required();
    trainsel->add_option("--task", task, "task kind")->required();
    trainsel->add_option("--provider", provider, "embedding provider spec")->required();
    trainsel->add_option("--out", out, "model output path")->required();
    trainsel->add_option("--learning-rate", lr, "gradient step size");
    trainsel->add_option("--epochs", epochs, "training epochs");
    trainsel->add_option("--batch-size", batch, "mini-batch size");
    trainsel->add_option("--negatives-per-anchor", negatives, "negative samples per anchor");
    trainsel->add_option("--margin", margin, "hinge margin");
    trainsel->add_option("--seed", seed, "sampling and shuffle seed");

    auto* report = app.add_subcommand("report", "Regenerate report files for a run directory");
    report->add_option("--run", run_dir, "runs/<id> directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (ingest->parsed()) return cmd_ingest(in, task, out);
    if (build->parsed()) return cmd_build_corpus(kind, in, task, out, rate, seed, others);
    if (retrieve->parsed())
        return cmd_retrieve(corpus_path, task, retriever, provider, model, query, k);
    if (run->parsed()) return cmd_run(config_path, !no_resume);
    if (score->parsed()) return cmd_score(records, task, labels);
    if (correct->parsed()) return cmd_correct_corpus(in, out, task, judge, log, cache_dir);
    if (trainsel->parsed())
        return cmd_train_selector(corpus_path, task, provider, out, lr, epochs, batch,
                                  negatives, margin, seed);
    if (report->parsed()) return cmd_report(run_dir);
    return 1;
}
