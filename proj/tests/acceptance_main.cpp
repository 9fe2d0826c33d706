// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances in code; timing limits are
// enforced where stated.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ralbench/correct.hpp"
#include "ralbench/metrics.hpp"
#include "ralbench/perturb.hpp"
#include "ralbench/runner.hpp"
#include "ralbench/select.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ralbench;

namespace {

struct Check {
    std::string name;
    std::function<void()> body;
};

void require(bool condition, const std::string& what) {
    if (!condition) throw Error(what);
}

void require_under(double seconds, double limit, const std::string& what) {
    if (seconds >= limit) {
        throw Error(what + ": took " + std::to_string(seconds) + "s, limit " +
                    std::to_string(limit) + "s");
    }
}

double micro_f1_of(TaskKind task, const std::vector<GenerationRecord>& records) {
    return micro_prf(task, outcomes_from_records(task, records)).f1;
}

// --------------------------------------------------------------------------
// 1. Echo sanity
// --------------------------------------------------------------------------
void echo_sanity() {
    const auto start = std::chrono::steady_clock::now();

    const auto corpus = fixtures::classification_corpus(200);
    const Bm25Retriever retriever(corpus);
    MockEchoBackend backend;
    PipelineConfig config;
    config.k = 1;

    const auto records = run_pipeline(corpus, corpus, retriever, backend, config);
    require(records.size() == 200, "expected 200 records");
    require(micro_f1_of(TaskKind::TextClassification, records) == 1.0,
            "micro F1 must equal 1.000 exactly on the labeled fixture");

    const auto corrupted = corrupt(corpus, 1.0, 99);
    const Bm25Retriever retriever2(corrupted.corpus);
    const auto records2 = run_pipeline(corpus, corrupted.corpus, retriever2, backend, config);
    std::vector<GenerationRecord> changed;
    for (const auto& r : records2) {
        if (corrupted.manifest.find(r.id)) changed.push_back(r);
    }
    require(changed.size() == 200, "rate 1.0 must change every instance");
    require(micro_f1_of(TaskKind::TextClassification, changed) == 0.0,
            "micro F1 must equal 0.000 exactly on manifest-changed instances");

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require_under(elapsed, 5.0, "echo sanity runtime");
}

// --------------------------------------------------------------------------
// 2. Perturbation exactness
// --------------------------------------------------------------------------
void perturbation_exactness() {
    for (std::size_t n : {10u, 100u, 1000u}) {
        const auto source = fixtures::classification_corpus(n);
        for (double rate : {0.2, 0.8, 1.0}) {
            const std::uint64_t seed = 1000 + n + static_cast<std::uint64_t>(rate * 10);
            const auto a = corrupt(source, rate, seed);
            const auto b = corrupt(source, rate, seed);
            require(a.manifest.to_jsonl() == b.manifest.to_jsonl(),
                    "identical seeds must reproduce identical manifests byte-for-byte");

            const auto expected =
                static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
            std::size_t changed = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& before = source.entries[i];
                const auto& after = a.corpus.entries[i];
                if (before.value != after.value) {
                    ++changed;
                    require(source.label_space->count(*after.value) == 1,
                            "changed value must stay in the label space");
                    require(*after.value != *before.value,
                            "changed value must differ from the original");
                }
            }
            require(changed == expected,
                    "corrupt must change exactly round(p*N) values (N=" + std::to_string(n) +
                        ", p=" + std::to_string(rate) + ")");
            require(a.manifest.entries.size() == expected, "manifest size must match the count");
        }
    }
}

// --------------------------------------------------------------------------
// 3. Retrieval oracle equivalence
// --------------------------------------------------------------------------
void retrieval_oracle_equivalence() {
    const auto start = std::chrono::steady_clock::now();

    Rng rng(31337);
    static const char* words[] = {"infusion", "renal",  "injury",  "dog",     "rat",   "dose",
                                  "serum",    "acid",   "protein", "enzyme",  "lesion", "tumor",
                                  "chronic",  "plasma", "gene",    "therapy", "acute",  "cell"};
    Corpus corpus;
    corpus.name = "oracle1000";
    corpus.task = TaskKind::TextClassification;
    corpus.kind = CorpusKind::labeled();
    for (std::size_t i = 0; i < 1000; ++i) {
        Instance inst;
        inst.id = "doc" + std::to_string(i);
        inst.task = corpus.task;
        const auto len = 4 + rng.uniform_below(8);
        for (std::uint64_t w = 0; w < len; ++w) {
            if (w) inst.key += ' ';
            inst.key += words[rng.uniform_below(std::size(words))];
        }
        inst.value = "True";
        corpus.entries.push_back(std::move(inst));
    }

    const auto ix = Bm25Index::build(corpus);
    FixtureHashProvider provider(24);
    const auto dense = DenseIndex::build(corpus, provider, Similarity::Cosine);

    for (int q = 0; q < 100; ++q) {
        std::string query;
        const auto len = 1 + rng.uniform_below(5);
        for (std::uint64_t w = 0; w < len; ++w) {
            if (w) query += ' ';
            query += words[rng.uniform_below(std::size(words))];
        }

        const auto bm_fast = ix.query(query, 10);
        const auto bm_slow = oracles::bm25_scan(corpus, query, 10);
        require(bm_fast.size() == bm_slow.size(), "bm25 oracle: result sizes differ");
        for (std::size_t i = 0; i < bm_fast.size(); ++i) {
            require(bm_fast[i].id == bm_slow[i].id, "bm25 oracle: id sequence mismatch");
        }

        const auto d_fast = dense.query(query, provider, 10);
        const auto d_slow = oracles::dense_scan(corpus, provider, query, 10, true);
        require(d_fast.size() == d_slow.size(), "dense oracle: result sizes differ");
        for (std::size_t i = 0; i < d_fast.size(); ++i) {
            require(d_fast[i].id == d_slow[i].id, "dense oracle: id sequence mismatch");
        }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require_under(elapsed, 30.0, "retrieval oracle equivalence runtime");
}

// --------------------------------------------------------------------------
// 4. Metric fixtures
// --------------------------------------------------------------------------
void metric_fixtures() {
    constexpr double kTol = 1e-12;
    auto close = [&](double a, double b) { return std::fabs(a - b) <= kTol; };

    auto label_outcome = [](const std::string& p, const std::string& g) {
        Outcome o;
        o.predicted = p.empty() ? ParsedAnswer::none() : ParsedAnswer::from_label(p);
        o.gold = ParsedAnswer::from_label(g);
        return o;
    };

    // Confusion [[40,10],[20,30]] over labels {A,B}.
    std::vector<Outcome> outcomes;
    for (int i = 0; i < 40; ++i) outcomes.push_back(label_outcome("A", "A"));
    for (int i = 0; i < 10; ++i) outcomes.push_back(label_outcome("B", "A"));
    for (int i = 0; i < 20; ++i) outcomes.push_back(label_outcome("A", "B"));
    for (int i = 0; i < 30; ++i) outcomes.push_back(label_outcome("B", "B"));
    const std::set<std::string> space{"A", "B"};

    const auto micro = micro_prf(TaskKind::TextClassification, outcomes);
    require(close(micro.f1, 0.7) && micro.precision == micro.recall && micro.recall == micro.f1,
            "micro fixture: P==R==F1==0.7");
    const auto weighted = weighted_prf(outcomes, space);
    require(close(weighted.precision, 17.0 / 24.0), "weighted precision fixture");
    require(close(weighted.recall, 0.7), "weighted recall fixture");
    require(close(weighted.f1, 23.0 / 33.0), "weighted F1 fixture");
    require(close(macro_f1(outcomes, space), 23.0 / 33.0), "macro F1 fixture (equal support)");

    // Single-label identity holds over random prediction sets (NoAnswer
    // counted wrong).
    Rng rng(515);
    for (int round = 0; round < 25; ++round) {
        std::vector<Outcome> random_outcomes;
        const char* labels[] = {"A", "B"};
        const auto n = 2 + rng.uniform_below(50);
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto p = rng.uniform_below(4) == 0 ? "" : labels[rng.uniform_below(2)];
            random_outcomes.push_back(label_outcome(p, labels[rng.uniform_below(2)]));
        }
        const auto prf = micro_prf(TaskKind::TextClassification, random_outcomes);
        require(prf.precision == prf.recall && prf.recall == prf.f1,
                "single-label identity micro P==R==F1 must hold on every run");
    }

    // AUROC / AUPRC against the O(n^2) oracles on 50-point fixtures.
    for (int round = 0; round < 5; ++round) {
        std::vector<double> scores;
        std::vector<bool> labels;
        for (int i = 0; i < 50; ++i) {
            scores.push_back(static_cast<double>(rng.uniform_below(25)) / 25.0);
            labels.push_back(rng.uniform_below(2) == 1);
        }
        labels[0] = true;
        labels[1] = false;
        require(std::fabs(auroc(scores, labels) - oracles::auroc_pairwise(scores, labels)) <= kTol,
                "AUROC must match the pairwise oracle to 1e-12");
        require(std::fabs(auprc(scores, labels) -
                          oracles::auprc_threshold_scan(scores, labels)) <= kTol,
                "AUPRC must match the step oracle to 1e-12");
    }
}

// --------------------------------------------------------------------------
// 5. Awareness rates
// --------------------------------------------------------------------------
void awareness_rates_criterion() {
    std::vector<AwarenessRecord> records;
    for (int i = 0; i < 10; ++i) records.push_back({false, true});   // t
    for (int i = 0; i < 30; ++i) records.push_back({false, false});
    for (int i = 0; i < 45; ++i) records.push_back({true, false});   // f
    for (int i = 0; i < 15; ++i) records.push_back({true, true});

    const auto rates = awareness_rates(records);
    require(rates.counts.l_t == 40 && rates.counts.t == 10, "l_t=40, t=10");
    require(rates.counts.l_f == 60 && rates.counts.f == 45, "l_f=60, f=45");
    require(rates.counts.l_t + rates.counts.l_f == 100, "counts invariant l_t+l_f=100");
    require(rates.true_rate && *rates.true_rate == 0.25, "true rate must be exactly 0.25");
    require(rates.fake_rate && *rates.fake_rate == 0.75, "fake rate must be exactly 0.75");

    const auto all_correct = awareness_rates(std::vector<AwarenessRecord>(5, {true, false}));
    require(!all_correct.true_rate.has_value(), "l_t=0 must yield an undefined true rate");
    require(all_correct.fake_rate && *all_correct.fake_rate == 1.0, "fake rate 1.0");
}

// --------------------------------------------------------------------------
// 6. Detect-and-Correct round trip
// --------------------------------------------------------------------------
void detect_and_correct_round_trip() {
    const auto source = fixtures::classification_corpus(60);
    const auto corrupted = corrupt(source, 1.0, 7);
    const Bm25Retriever retriever(corrupted.corpus);
    MockEchoBackend backend;

    PipelineConfig config;
    config.k = 1;

    // Baseline: fully wrong.
    const auto baseline = run_pipeline(source, corrupted.corpus, retriever, backend, config);
    require(micro_f1_of(TaskKind::TextClassification, baseline) == 0.0,
            "fully counterfactual baseline must score 0");

    // Manifest-oracle judge restores F1 to exactly 1.000.
    CorrectionLayer layer(std::make_shared<fixtures::OracleJudgeBackend>(
                              fixtures::OracleJudgeBackend::from_manifest(corrupted.manifest,
                                                                          corrupted.corpus)),
                          corrupted.corpus);
    PipelineConfig with_oracle = config;
    with_oracle.transform = layer.transform();
    const auto restored = run_pipeline(source, corrupted.corpus, retriever, backend, with_oracle);
    require(micro_f1_of(TaskKind::TextClassification, restored) == 1.0,
            "oracle-judge correction must restore F1 to 1.000");

    // No-op judge reproduces the uncorrected records bit-identically.
    CorrectionLayer noop(std::make_shared<MockFixedBackend>("the label is correct"),
                         corrupted.corpus);
    PipelineConfig with_noop = config;
    with_noop.transform = noop.transform();
    const auto unchanged = run_pipeline(source, corrupted.corpus, retriever, backend, with_noop);
    require(unchanged.size() == baseline.size(), "record counts differ");
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        require(unchanged[i].to_json() == baseline[i].to_json(),
                "no-op judge must reproduce uncorrected records bit-identically");
    }
}

// --------------------------------------------------------------------------
// 7. Triplet trainer
// --------------------------------------------------------------------------
void triplet_trainer() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(404040);

    // Gradient check on random active triplets.
    auto random_vec = [&](std::size_t dim) {
        std::vector<double> v(dim);
        for (auto& x : v) x = 2.0 * rng.uniform01() - 1.0;
        return v;
    };
    std::size_t checked = 0;
    while (checked < 20) {
        ProjectionModel model(4, 1.0);
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 4; ++c) model.weight(r, c) += 0.25 * (rng.uniform01() - 0.5);
        const Triplet t{random_vec(4), random_vec(4), random_vec(4)};
        if (triplet_loss(model, t) < 0.05) continue;
        ++checked;
        const auto analytic = triplet_gradient(model, t);
        const auto numeric = oracles::finite_difference_gradient(model, t, 1e-5);
        for (std::size_t i = 0; i < analytic.d_weights.size(); ++i) {
            const double a = analytic.d_weights[i];
            const double n = numeric.d_weights[i];
            const double rel = std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
            require(rel <= 1e-5, "analytic gradient must match central differences to 1e-5");
        }
    }

    // Two Gaussian clusters, d=16, 200 anchors (4 negatives each), 20 epochs,
    // >= 95% held-out satisfaction. Clusters sit 3.5 apart along one axis with
    // most variance in the other dims, which the projection learns to shrink.
    auto gaussian = [&rng] {
        const double u1 = std::max(rng.uniform01(), 1e-12);
        const double u2 = rng.uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    };
    auto sample = [&](double offset) {
        std::vector<double> v(16);
        v[0] = offset + 0.5 * gaussian();
        for (std::size_t i = 1; i < 16; ++i) v[i] = 1.5 * gaussian();
        return v;
    };
    std::vector<Triplet> train_set, held_out;
    for (int i = 0; i < 200; ++i) {
        const auto anchor = sample(0.0);
        const auto positive = sample(0.0);
        for (int j = 0; j < 4; ++j) {
            train_set.push_back({anchor, positive, sample(3.5)});
        }
    }
    for (int i = 0; i < 500; ++i) {
        held_out.push_back({sample(0.0), sample(0.0), sample(3.5)});
    }

    TrainConfig config;
    config.learning_rate = 0.1;
    config.epochs = 20;
    config.batch_size = 32;
    config.seed = 9;
    const auto result = train(train_set, config, 16);
    require(result.loss_trace.back() <= result.loss_trace.front(),
            "final mean loss must not exceed the initial loss");

    auto dist = [](const std::vector<double>& x, const std::vector<double>& y) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
        return std::sqrt(acc);
    };
    std::size_t satisfied = 0;
    for (const auto& t : held_out) {
        const auto a = result.model.project(t.anchor);
        const auto p = result.model.project(t.positive);
        const auto n = result.model.project(t.negative);
        if (dist(a, p) < dist(a, n)) ++satisfied;
    }
    const double fraction = static_cast<double>(satisfied) / held_out.size();
    require(fraction >= 0.95, "held-out triplet satisfaction must reach 95%, got " +
                                  std::to_string(fraction));

    // Identity-initialized selector ranking equals dense distance ranking.
    const auto corpus = fixtures::classification_corpus(120);
    FixtureHashProvider provider(16);
    const ProjectionModel identity(16, 1.0);
    for (int q = 0; q < 10; ++q) {
        const auto& query = corpus.entries[q * 11].key;
        const auto selected = select_examples(identity, provider, query, corpus, 15);
        const auto dense = oracles::dense_scan(corpus, provider, query, 15, true);
        require(selected.size() == dense.size(), "selector/dense result sizes differ");
        for (std::size_t i = 0; i < selected.size(); ++i) {
            require(selected[i].id == dense[i].id,
                    "identity selector ranking must equal dense distance ranking");
        }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require_under(elapsed, 60.0, "triplet trainer runtime");
}

// --------------------------------------------------------------------------
// 8. End-to-end reproducibility
// --------------------------------------------------------------------------
std::string matrix_config(const std::filesystem::path& dir, const std::string& run_id) {
    nlohmann::ordered_json j;
    j["run_id"] = run_id;
    j["output_dir"] = (dir / "runs").string();
    j["cache_dir"] = (dir / ("cache-" + run_id)).string();
    j["k"] = 1;
    j["datasets"] = {
        {{"name", "clsfix"},
         {"task", "text_classification"},
         {"corpus", (dir / "cls.jsonl").string()},
         {"test", (dir / "cls_test.jsonl").string()}},
        {{"name", "triplefix"},
         {"task", "triple_extraction"},
         {"corpus", (dir / "triples.jsonl").string()},
         {"test", (dir / "triples_test.jsonl").string()}},
    };
    j["corpus_kinds"] = {
        {{"kind", "labeled"}},
        {{"kind", "unlabeled"}},
        {{"kind", "counterfactual"}, {"rate", 0.8}, {"seed", 21}},
        {{"kind", "diverse"}},
        {{"kind", "negative"}, {"seed", 22}},
    };
    j["retrievers"] = {
        {{"kind", "bm25"}},
        {{"kind", "dense"}, {"provider", "fixture:16"}},
        {{"kind", "none"}},
    };
    j["backends"] = {
        {{"kind", "mock_echo"}},
        {{"kind", "mock_fixed"}, {"text", "True"}},
    };
    return j.dump();
}

std::string all_records_bytes(const RunManifest& manifest) {
    std::string all;
    for (const auto& [cell, status] : manifest.cells) {
        require(status.state == "done", "cell not done: " + cell.id + " (" + status.error + ")");
        all += cell.id;
        all += '\x1e';
        all += read_file(status.records_path);
        all += '\x1e';
    }
    return all;
}

void end_to_end_reproducibility() {
    fixtures::TempDir dir("acceptance-e2e");
    const auto cls = fixtures::classification_corpus(12, "clsfix");
    const auto triples = fixtures::triple_corpus(8, "triplefix");
    save_corpus(cls, dir / "cls.jsonl");
    save_corpus(fixtures::head_subset(cls, 6), dir / "cls_test.jsonl");
    save_corpus(triples, dir / "triples.jsonl");
    save_corpus(fixtures::head_subset(triples, 4), dir / "triples_test.jsonl");

    // Uninterrupted reference.
    const auto ref_config = RunConfig::from_json(matrix_config(dir.path(), "reference"));
    const auto ref_cells = plan(ref_config);
    require(ref_cells.size() == 2 * 5 * 3 * 2, "expected the 60-cell matrix");
    const auto ref = execute(ref_config, ref_cells);
    require(ref.done_count() == 60, "reference run must complete all 60 cells");

    // Interrupted at 23 cells, then resumed.
    const auto config = RunConfig::from_json(matrix_config(dir.path(), "interrupted"));
    ExecuteOptions stop_early;
    stop_early.max_cells = 23;
    const auto partial = execute(config, plan(config), stop_early);
    require(partial.done_count() == 23, "interrupted run must stop at 23 cells");
    const auto resumed = execute(config, plan(config));
    require(resumed.done_count() == 60, "resumed run must finish the matrix");

    require(all_records_bytes(resumed) == all_records_bytes(ref),
            "interrupted+resumed records must be byte-identical to the uninterrupted run");

    // Every report number recomputes exactly from the persisted records.
    const auto paths = write_report(config, resumed);
    const auto csv = read_file(paths.csv);
    for (const auto& [cell, status] : resumed.cells) {
        const auto& dataset = config.datasets[cell.dataset];
        const auto records = load_records(status.records_path);
        auto test = load_corpus(dataset.test_path, dataset.task);
        const auto report = score_records(dataset.task, records, test.label_space);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", report.values.at("micro_f1"));
        const std::string row = dataset.name + "," +
                                config.corpus_kinds[cell.corpus_kind].label() + "," +
                                config.retrievers[cell.retriever].label() + "," +
                                config.backends[cell.backend].label() + ",micro_f1," + buf;
        require(csv.find(row) != std::string::npos,
                "report row must match a fresh metrics computation: " + row);
    }
}

}  // namespace

int main() {
    const std::vector<Check> checks{
        {"echo-sanity", echo_sanity},
        {"perturbation-exactness", perturbation_exactness},
        {"retrieval-oracle-equivalence", retrieval_oracle_equivalence},
        {"metric-fixtures", metric_fixtures},
        {"awareness-rates", awareness_rates_criterion},
        {"detect-and-correct-round-trip", detect_and_correct_round_trip},
        {"triplet-trainer", triplet_trainer},
        {"end-to-end-reproducibility", end_to_end_reproducibility},
    };

    int failures = 0;
    for (const auto& check : checks) {
        const auto start = std::chrono::steady_clock::now();
        try {
            check.body();
            const double s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::printf("PASS %s (%.2fs)\n", check.name.c_str(), s);
        } catch (const std::exception& e) {
            ++failures;
            std::printf("FAIL %s: %s\n", check.name.c_str(), e.what());
        }
    }
    if (failures > 0) {
        std::printf("%d of %zu acceptance criteria failed\n", failures, checks.size());
        return 1;
    }
    std::printf("all %zu acceptance criteria passed\n", checks.size());
    return 0;
}
