#pragma once

#include "visret/corpus.hpp"
#include "visret/embed.hpp"
#include "visret/providers.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace visret {

struct RelevanceJudgments {
    std::set<std::string> positives;
    std::size_t universe_size = 0;
};

RelevanceJudgments judgments_from_slot(const EntitySlot& slot);

/// |positives in top-k| / min(k, |positives|). Throws on zero positives;
/// callers exclude such rows.
double recall_at_k(const RankedList& ranked, const RelevanceJudgments& judgments,
                   std::size_t k);

/// Binary-gain NDCG: DCG@k with 1/log2(p+1) discounts over the ideal DCG.
/// ndcg_at_k(k=1) equals recall_at_k(k=1) by construction.
double ndcg_at_k(const RankedList& ranked, const RelevanceJudgments& judgments,
                 std::size_t k);

struct JudgeVerdict {
    double score = 0.0; // in [0, 1]
    bool hallucination = false;
    bool redundant = false;
    std::optional<std::string> explanation;
    std::string raw;
};

/// Parses the judge's "Score: {number} | flags | (Explanation: ...)" output
/// format. Throws std::runtime_error when no score token is found; scores
/// outside [0, 1] are clamped with a warning on stderr.
JudgeVerdict parse_judge_output(const std::string& text);

/// Substitutes the three fields into the judge rubric, calls the judge at
/// temperature 0 and parses the verdict, re-asking once on unparseable
/// output before giving up.
JudgeVerdict judge_answer(ChatProvider& judge, const std::string& question,
                          const std::string& reference, const std::string& answer);

struct MetricRow {
    std::string query_id;
    int entity_index = 0;
    std::string strategy;
    std::vector<double> recall; // aligned with the report's k values
    std::vector<double> ndcg;
    std::optional<double> vqa_score; // judge score in [0, 1]
    bool zero_positives = false;     // excluded from aggregates, counted
};

struct StrategyAggregate {
    std::string strategy;
    std::vector<std::size_t> k;
    std::vector<double> recall;
    std::vector<double> ndcg;
    std::optional<double> vqa_accuracy; // mean judge score x 100
    std::size_t n_queries = 0;
    std::size_t excluded_zero_positive = 0; // entity rows excluded
};

struct MetricReport {
    std::vector<std::size_t> k;
    std::vector<MetricRow> rows;
    std::vector<StrategyAggregate> aggregates;
};

/// Unweighted per-strategy means over queries; a multi-entity query first
/// contributes the mean of its entity rows so each query weighs equally.
/// Throws when no rows survive zero-positive exclusion.
MetricReport aggregate_report(std::vector<MetricRow> rows,
                              const std::vector<std::size_t>& ks);

/// Machine-readable report JSON (aggregates plus per-query rows).
std::string report_to_json(const MetricReport& report);

/// Fixed-width text table, one aggregate row per strategy.
std::string render_table(const MetricReport& report);

} // namespace visret
