#pragma once

#include "ralbench/correct.hpp"
#include "ralbench/metrics.hpp"
#include "ralbench/select.hpp"

namespace ralbench {

struct DatasetSpec {
    std::string name;
    TaskKind task = TaskKind::TextClassification;
    std::filesystem::path corpus_path;
    std::filesystem::path test_path;
    std::optional<std::string> instruction;  // overrides the task default
    std::optional<std::string> label_aim;    // dataset-specific labeling-prompt phrasing
};

struct CorpusKindSpec {
    std::string kind;  // labeled | unlabeled | counterfactual | diverse | negative
    double rate = 0.8;
    std::uint64_t seed = 0;

    std::string label() const;
};

struct ProviderSpec {
    std::string kind;  // fixture | http | file
    std::size_t dim = 0;
    std::string endpoint;
    std::string model;
    std::filesystem::path path;

    static ProviderSpec parse(const std::string& shorthand);
    std::shared_ptr<EmbeddingProvider> instantiate() const;
    std::string label() const;
};

struct RetrieverSpec {
    std::string kind;  // bm25 | dense | selector | none
    std::optional<ProviderSpec> provider;
    std::string similarity = "cosine";
    std::filesystem::path model_path;  // selector only

    std::string label() const;
};

struct BackendSpec {
    std::string kind;  // mock_echo | mock_fixed | http
    std::string text;  // mock_fixed constant
    HttpChatConfig http;

    static BackendSpec parse(const std::string& shorthand);
    std::shared_ptr<Backend> instantiate() const;
    std::string label() const;
};

struct CorrectionSpec {
    std::string mode = "off";  // off | retrieval_time | corpus_rewrite
    std::optional<BackendSpec> judge;
};

struct RunConfig {
    std::string run_id = "run";
    std::filesystem::path output_dir = "runs";
    std::filesystem::path cache_dir;
    std::size_t k = 1;
    bool ask_negativity = false;
    NegativityMapping negativity_mapping = NegativityMapping::InstructionLiteral;
    std::size_t concurrency = 1;     // per-instance fan-out inside a cell
    std::size_t parallel_cells = 1;  // opt-in: independent cells run concurrently
    std::optional<std::string> instruction_override;
    std::vector<DatasetSpec> datasets;
    std::vector<CorpusKindSpec> corpus_kinds;
    std::vector<RetrieverSpec> retrievers;
    std::vector<BackendSpec> backends;
    CorrectionSpec correction;

    static RunConfig from_json(const std::string& text);
    static RunConfig from_file(const std::filesystem::path& path);
    std::string to_json() const;  // canonical form; hashed for resume checks
    std::string config_hash() const;

    std::filesystem::path run_dir() const { return output_dir / run_id; }
};

// One experiment cell: a point in the dataset x corpus-kind x retriever x
// backend matrix.
struct Cell {
    std::size_t dataset = 0;
    std::size_t corpus_kind = 0;
    std::size_t retriever = 0;
    std::size_t backend = 0;
    std::string id;  // sanitized "dataset__kind__retriever__backend"
};

// Deterministic cell expansion ordered (dataset, corpus kind, retriever,
// backend). Cells whose retriever is "none" run with retrieval disabled
// (CorpusKind::None) whatever their corpus-kind axis says.
std::vector<Cell> plan(const RunConfig& config);

struct CellStatus {
    std::string state = "pending";  // pending | done | failed
    std::string records_path;
    std::string metrics_path;
    std::string error;
    std::size_t record_count = 0;
};

struct RunManifest {
    std::string run_id;
    std::string config_hash;
    std::vector<std::pair<Cell, CellStatus>> cells;  // in plan order

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);

    std::size_t done_count() const;
};

struct ExecuteOptions {
    bool resume = true;
    // Stop after this many newly executed cells (budgeted partial runs);
    // a later resume picks up the remainder.
    std::size_t max_cells = SIZE_MAX;
};

// Runs every planned cell through the pipeline; failures stay confined to
// their cell. With resume, cells already marked done are skipped and their
// artifacts left untouched.
RunManifest execute(const RunConfig& config, const std::vector<Cell>& cells,
                    const ExecuteOptions& options = {});

struct ReportPaths {
    std::filesystem::path markdown;
    std::filesystem::path csv;
};

// Spec parsing from standalone JSON (a shorthand string or an object with the
// run-config fields); shared by the C API and the CLI.
RetrieverSpec retriever_spec_from_json(const std::string& text);
BackendSpec backend_spec_from_json(const std::string& text);

// Retriever construction honoring the disabled/empty-corpus rules the runner
// applies.
std::unique_ptr<Retriever> build_retriever(const RetrieverSpec& spec, const Corpus& corpus,
                                           std::shared_ptr<EmbeddingCache> cache = nullptr);

// Emits report.md (metric grid + awareness table) and report.csv. Every
// number is recomputed from the persisted records through the metrics
// module; nothing is read back from metrics.json.
ReportPaths write_report(const RunConfig& config, const RunManifest& manifest);

}  // namespace ralbench
