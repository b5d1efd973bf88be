#pragma once

#include "visret/embed.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace visret {

struct ImageRecord {
    std::string image_id;
    std::string uri;
    int relevance = 0; // binary {0,1}

    bool operator==(const ImageRecord&) const = default;
};

struct EntitySlot {
    std::string entity_name;
    std::vector<ImageRecord> images;

    bool operator==(const EntitySlot&) const = default;
};

enum class DatasetKind { SingleEntityVQA, MultiEntityVQA, CaptionRetrieval };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

struct QueryRecord {
    std::string query_id;
    std::string text;
    DatasetKind dataset_kind = DatasetKind::SingleEntityVQA;
    std::optional<std::string> gold_answer;
    std::vector<EntitySlot> entities;

    bool operator==(const QueryRecord&) const = default;
};

struct Benchmark {
    std::string name;
    std::vector<QueryRecord> queries;

    bool operator==(const Benchmark&) const = default;
};

/// Malformed benchmark content (as opposed to plain I/O failure).
class BenchmarkParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loads a JSONL benchmark (one query object per line). The benchmark name
/// is the file stem. Unknown top-level keys are ignored; a note is appended
/// to *warnings when provided. Throws std::runtime_error naming the line on
/// malformed input and on duplicate query ids.
Benchmark load_benchmark(const std::filesystem::path& path,
                         std::vector<std::string>* warnings = nullptr);

/// Writes the benchmark in the same JSONL schema load_benchmark reads.
void save_benchmark(const Benchmark& b, const std::filesystem::path& path);

/// One query serialized as a single JSON line (no trailing newline).
std::string to_jsonl_line(const QueryRecord& q);

struct ValidationIssue {
    enum class Severity { Warning, Error };
    Severity severity = Severity::Warning;
    std::string query_id;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool has_errors() const;
    std::size_t error_count() const;
    std::size_t warning_count() const;
};

/// Reports zero-positive entity slots (warnings), duplicate image ids
/// within a slot (errors) and, when check_uris is set, file URIs that do
/// not exist (warnings). Errors block downstream use.
ValidationReport validate_benchmark(const Benchmark& b, bool check_uris = false);

/// (query_id, entity_index) -> ranking, for one named retriever.
using RankingKey = std::pair<std::string, int>;
using RetrieverRankings = std::map<RankingKey, RankedList>;

/// Keeps exactly the queries on which no retriever achieves Recall@1 = 1.0
/// on any entity slot; input order preserved. Throws when a ranking is
/// missing for a (retriever, query, entity) triple.
Benchmark filter_hard(const Benchmark& b,
                      const std::map<std::string, RetrieverRankings>& baselines);

struct StatsSummary {
    std::size_t n_queries = 0;
    double mean_query_words = 0.0;
    double mean_images_per_slot = 0.0;
    double mean_positives_per_slot = 0.0;
};

StatsSummary corpus_stats(const Benchmark& b);

/// Renders the four corpus rows in the dataset-statistics table layout.
std::string format_stats(const StatsSummary& s, const std::string& name);

} // namespace visret
