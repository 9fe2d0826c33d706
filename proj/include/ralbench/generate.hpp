#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>

#include "ralbench/retrieve.hpp"

namespace ralbench {

// Appended verbatim when a run asks for the negativity judgment (testbed 4).
extern const char* const kNegativityInstruction;

struct PromptSpec {
    std::string instruction;
    std::vector<RetrievedExample> examples;
    std::string context;
    bool ask_negativity = false;
};

// Deterministic rendering: instruction, an "Examples:" block with one
// "context:/response:" pair per labeled example ("retrieved sentence:" for
// unlabeled ones), the input context with an open "response:" line, and the
// negativity instruction last when requested.
std::string assemble_prompt(const PromptSpec& spec);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual std::string generate(const std::string& prompt) = 0;
    // Mocks are pure and bypass the on-disk response cache.
    virtual bool cacheable() const { return false; }
};

class MockFixedBackend final : public Backend {
public:
    explicit MockFixedBackend(std::string text) : text_(std::move(text)) {}
    std::string id() const override { return "mock-fixed:" + text_; }
    std::string generate(const std::string&) override { return text_; }

private:
    std::string text_;
};

// Returns the response value of the first example embedded in the prompt, or
// the empty string when the prompt carries none.
class MockEchoBackend final : public Backend {
public:
    std::string id() const override { return "mock-echo"; }
    std::string generate(const std::string& prompt) override;
};

struct HttpChatConfig {
    std::string endpoint;   // http://host:port/path
    std::string model;
    double temperature = 0.0;
    int max_tokens = 256;
    std::string api_key_env;  // name of the env var holding the bearer token
    int max_retries = 3;
    int backoff_initial_ms = 250;
    int max_inflight = 4;  // global concurrent-request bound for this backend
};

// Counting gate bounding concurrent requests against one backend, shared by
// every pipeline/cell that talks to it.
class InflightGate {
public:
    explicit InflightGate(std::size_t limit);
    void acquire();
    void release();

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t available_;
};

// Wire contract: POST {"model", "prompt", "temperature", "max_tokens"} ->
// {"text"}, retried with exponential backoff.
class HttpChatBackend final : public Backend {
public:
    explicit HttpChatBackend(HttpChatConfig config,
                             std::shared_ptr<InflightGate> gate = nullptr);
    std::string id() const override;
    std::string generate(const std::string& prompt) override;
    bool cacheable() const override { return true; }

private:
    HttpChatConfig config_;
    std::shared_ptr<InflightGate> gate_;
};

// Content-addressed response cache keyed by hash(backend id, prompt).
class GenerationCache {
public:
    explicit GenerationCache(std::filesystem::path root);
    std::optional<std::string> get(const std::string& backend_id,
                                   const std::string& prompt) const;
    void put(const std::string& backend_id, const std::string& prompt,
             const std::string& response);

private:
    std::filesystem::path root_;
    std::filesystem::path entry_path(const std::string& backend_id,
                                     const std::string& prompt) const;
};

struct GenerateOutcome {
    std::string text;
    bool cache_hit = false;
    std::int64_t latency_ms = 0;
};

GenerateOutcome generate(Backend& backend, const std::string& prompt, GenerationCache* cache);

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------
enum class NegativityMapping {
    InstructionLiteral,  // the prompt's own rule: output False => example is negative
    MetricProse,         // the inverted reading: output True => example is negative
};

struct GenerationRecord {
    std::string id;
    std::string prompt;
    std::string backend_id;
    std::string raw_output;
    ParsedAnswer answer;
    std::string gold;
    bool correct = false;
    std::vector<std::string> example_ids;
    std::optional<std::string> negativity_token;  // raw trailing True/False token
    std::optional<bool> negativity_claim;         // model said the example IS negative
    std::int64_t latency_ms = 0;
    bool cache_hit = false;
    std::optional<std::string> error;

    std::string to_json() const;
    static GenerationRecord from_json(const std::string& line);
};

std::vector<GenerationRecord> load_records(const std::filesystem::path& path);

// Hook applied to each retrieved example before prompt assembly; the
// correction layer plugs in here. Returning nullopt drops the example.
using ExampleTransform =
    std::function<std::optional<RetrievedExample>(const RetrievedExample&)>;

struct PipelineConfig {
    std::size_t k = 1;
    bool ask_negativity = false;
    NegativityMapping negativity_mapping = NegativityMapping::InstructionLiteral;
    std::optional<std::string> instruction_override;
    std::filesystem::path records_path;  // empty: keep records in memory only
    bool resume = true;
    std::size_t concurrency = 1;
    ExampleTransform transform;  // optional
};

// Retrieve -> assemble -> generate -> parse -> score, one record per test
// instance. Records append to records_path as they complete, so an
// interrupted run resumes without recomputing finished instances. Backend
// errors mark the record failed instead of aborting the run.
std::vector<GenerationRecord> run_pipeline(const Corpus& test_set, const Corpus& corpus,
                                           const Retriever& retriever, Backend& backend,
                                           const PipelineConfig& config,
                                           GenerationCache* cache = nullptr);

// Last standalone True/False token in the model output, if any.
std::optional<std::string> extract_negativity_token(const std::string& raw);
bool negativity_claim_from_token(const std::string& token, NegativityMapping mapping);

}  // namespace ralbench
