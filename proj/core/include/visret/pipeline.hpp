#pragma once

#include "visret/corpus.hpp"
#include "visret/embed.hpp"
#include "visret/fusion.hpp"
#include "visret/providers.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace visret {

enum class StrategyKind { OriginalQuery, QueryExpansion, VisRet };

std::string to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& s);

struct RetrievalStrategy {
    StrategyKind kind = StrategyKind::OriginalQuery;
    std::string name;                 // report label; defaults to the kind string
    int m = 3;                        // VisRet only; m = 1 is the single-image ablation
    FusionParams fusion;              // VisRet only
    ImageQuality quality = ImageQuality::High;
    bool use_generated_as_context = false;
    bool allow_partial = false;       // accept < m generations instead of aborting

    std::string label() const { return name.empty() ? to_string(kind) : name; }
};

struct RetrievalOutcome {
    std::vector<RankedList> per_entity; // one per EntitySlot
    std::vector<GeneratedImage> generated;
    std::vector<T2IInstruction> instructions;
};

struct PipelineProviders {
    ChatProvider* chat = nullptr;
    T2IProvider* t2i = nullptr;
    EmbeddingProvider* embedder = nullptr;
};

/// OriginalQuery embeds the query text as-is; QueryExpansion first applies
/// the rephrase prompt and embeds the rephrased text. One full ranking per
/// entity slot; no images are generated.
RetrievalOutcome retrieve_text_query(const RetrievalStrategy& strategy,
                                     const QueryRecord& query,
                                     const std::vector<const VectorIndex*>& indexes,
                                     const PipelineProviders& providers);

/// Per entity slot: rephrase -> T2I instruction -> generate m images ->
/// embed each -> m independent searches -> RRF fusion. The outcome carries
/// the generated images and instructions.
RetrievalOutcome retrieve_visret(const RetrievalStrategy& strategy, const QueryRecord& query,
                                 const std::vector<const VectorIndex*>& indexes,
                                 const PipelineProviders& providers);

/// Dispatches on strategy.kind.
RetrievalOutcome run_strategy(const RetrievalStrategy& strategy, const QueryRecord& query,
                              const std::vector<const VectorIndex*>& indexes,
                              const PipelineProviders& providers);

struct ContextImage {
    std::string bytes;
    std::string entity_name;
};

using UriResolver = std::function<std::string(const std::string& uri)>;

/// Default resolver: reads a local file (plain path or file:// URI).
std::string read_uri_bytes(const std::string& uri);

/// Splits budget evenly across entity slots (floor(k/E) each, remainder to
/// earlier slots), takes that many top-ranked images per slot in rank order
/// and resolves their bytes. In generated-as-context mode the generated
/// images are returned instead, one per entity slot.
std::vector<ContextImage> compose_context(const RetrievalOutcome& outcome,
                                          const QueryRecord& query, int budget,
                                          bool use_generated_as_context = false,
                                          const UriResolver& resolver = read_uri_bytes,
                                          std::vector<std::string>* warnings = nullptr);

struct VqaAnswer {
    std::string answer;       // text after the "### Answer:" marker, trimmed
    std::string raw_response; // full reader output
    bool marker_found = true; // false -> answer is the whole response
};

/// Assembles the VQA reader prompt for the query's dataset kind, attaches
/// the context images (none = knowledge-only mode) and extracts the answer.
VqaAnswer answer_vqa(ChatProvider& reader, const QueryRecord& query,
                     const std::vector<ContextImage>& context);

/// One exported (query, entity) retrieval result.
struct OutcomeRecord {
    std::string query_id;
    int entity_index = 0;
    std::string strategy;
    std::optional<std::string> instruction;
    std::vector<std::string> generated_hashes;
    RankedList ranking;
};

std::vector<OutcomeRecord> outcome_records(const RetrievalOutcome& outcome,
                                           const QueryRecord& query);

void write_outcomes_jsonl(const std::filesystem::path& path,
                          const std::vector<OutcomeRecord>& records);
std::vector<OutcomeRecord> read_outcomes_jsonl(const std::filesystem::path& path);

} // namespace visret
