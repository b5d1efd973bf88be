#pragma once

#include "visret/cache.hpp"
#include "visret/eval.hpp"
#include "visret/pipeline.hpp"
#include "visret/testkit.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace visret {

/// Config or benchmark validation failure; maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EndpointConfig {
    std::string kind = "mock"; // "mock" or "openai"
    std::string base_url;
    std::string model;
    std::string api_key_env;
    double timeout_s = 60.0;
    int max_retries = 3;
};

struct StrategyConfig {
    StrategyKind kind = StrategyKind::OriginalQuery;
    std::string name; // report label; defaults to the kind string
    int m = 3;
    double rrf_lambda = 1.0;
    std::optional<std::size_t> output_k;
    ImageQuality quality = ImageQuality::High;
    bool use_generated_as_context = false;

    RetrievalStrategy to_strategy(bool allow_partial) const;
};

struct VqaConfig {
    bool enabled = false;
    int context_k = 1; // total image budget across entity slots
};

struct ExperimentConfig {
    std::filesystem::path benchmark_path;
    std::optional<std::filesystem::path> embeddings_path;
    std::optional<std::filesystem::path> planted_fixtures_path;
    std::map<std::string, EndpointConfig> providers; // chat/t2i/embedding/reader/judge
    std::vector<StrategyConfig> strategies;
    std::vector<std::size_t> k = {1, 10, 30};
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    int workers = 1;
    int provider_inflight = 4;
    std::size_t embedding_dim = 64; // mock embedder dim when no fixtures
    double failure_budget = 0.02;
    VqaConfig vqa;
    bool allow_partial = false;
    bool dry_run = false;
};

/// Parses the JSON config file; relative paths resolve against the config's
/// directory. Throws ConfigError on schema problems.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Effective config as canonical JSON (the manifest hashes this).
std::string config_to_json(const ExperimentConfig& config);

/// Throws ConfigError when k values are not ascending/positive, strategies
/// are missing, or a strategy references an undeclared endpoint.
void validate_config(const ExperimentConfig& config);

/// Owns the provider stack (raw adapters or mocks, drift guard, caching
/// wrappers) assembled from a config.
struct ProviderSet {
    PipelineProviders pipeline;   // non-owning views
    ChatProvider* reader = nullptr;
    ChatProvider* judge = nullptr;

    std::unique_ptr<ContentCache> cache;
    std::unique_ptr<InflightLimiter> limiter;
    std::vector<std::unique_ptr<ChatProvider>> chat_owned;
    std::vector<std::unique_ptr<T2IProvider>> t2i_owned;
    std::vector<std::unique_ptr<EmbeddingProvider>> embed_owned;
    std::shared_ptr<const PlantedFixtures> fixtures;
};

ProviderSet build_providers(const ExperimentConfig& config);

struct RunResult {
    MetricReport report;
    std::string manifest_json;
    std::vector<std::string> failures; // "strategy/query_id: reason"
    int exit_code = 0;                 // 0 ok, 2 failure budget exceeded
};

/// Full protocol: retrieve per strategy x query, optionally VQA-answer and
/// judge, compute metrics, export rankings, per-query rows, the aggregate
/// report and the run manifest under output_dir.
RunResult run_experiment(const ExperimentConfig& config);

/// image_id -> embedding, read from the configured embedding file or
/// computed per image URI through the embedding provider.
std::unordered_map<std::string, EmbeddingVector> load_corpus_vectors(
    const ExperimentConfig& config, const Benchmark& benchmark,
    EmbeddingProvider* embedder);

/// One VectorIndex per (query, entity slot).
std::vector<std::vector<VectorIndex>> build_query_indexes(
    const Benchmark& benchmark,
    const std::unordered_map<std::string, EmbeddingVector>& corpus_vectors);

/// Per-query metric rows as JSONL; each line carries the k values so the
/// `report` subcommand can re-render without the original config.
void write_rows_jsonl(const std::filesystem::path& path, const std::vector<MetricRow>& rows,
                      const std::vector<std::size_t>& ks);
std::vector<MetricRow> read_rows_jsonl(const std::filesystem::path& path,
                                       std::vector<std::size_t>& ks_out);

} // namespace visret
