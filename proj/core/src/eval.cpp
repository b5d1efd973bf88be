#include "visret/eval.hpp"

#include "visret/prompts.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace visret {

using nlohmann::json;

namespace {

void check_metric_pre(const RelevanceJudgments& judgments, std::size_t k) {
    if (k == 0) throw std::invalid_argument("metric: k must be >= 1");
    if (judgments.positives.empty()) {
        throw std::domain_error("metric: no positives; exclude this row");
    }
    if (judgments.positives.size() > judgments.universe_size) {
        throw std::invalid_argument("metric: positives exceed universe size");
    }
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

} // namespace

RelevanceJudgments judgments_from_slot(const EntitySlot& slot) {
    RelevanceJudgments j;
    j.universe_size = slot.images.size();
    for (const auto& img : slot.images) {
        if (img.relevance == 1) j.positives.insert(img.image_id);
    }
    return j;
}

double recall_at_k(const RankedList& ranked, const RelevanceJudgments& judgments,
                   std::size_t k) {
    check_metric_pre(judgments, k);
    std::size_t hits = 0;
    const std::size_t top = std::min(k, ranked.items.size());
    for (std::size_t p = 0; p < top; ++p) {
        if (judgments.positives.count(ranked.items[p].image_id)) ++hits;
    }
    const std::size_t denom = std::min(k, judgments.positives.size());
    return static_cast<double>(hits) / static_cast<double>(denom);
}

double ndcg_at_k(const RankedList& ranked, const RelevanceJudgments& judgments,
                 std::size_t k) {
    check_metric_pre(judgments, k);
    double dcg = 0.0;
    const std::size_t top = std::min(k, ranked.items.size());
    for (std::size_t p = 0; p < top; ++p) {
        if (judgments.positives.count(ranked.items[p].image_id)) {
            dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
        }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, judgments.positives.size());
    for (std::size_t p = 0; p < ideal; ++p) {
        idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
    return dcg / idcg;
}

JudgeVerdict parse_judge_output(const std::string& text) {
    JudgeVerdict verdict;
    verdict.raw = text;

    // First "Score: {number}" token.
    std::size_t pos = 0;
    double score = 0.0;
    bool found = false;
    while ((pos = text.find("Score:", pos)) != std::string::npos) {
        const char* start = text.c_str() + pos + 6;
        char* end = nullptr;
        const double value = std::strtod(start, &end);
        if (end != start) {
            score = value;
            pos = static_cast<std::size_t>(end - text.c_str());
            found = true;
            break;
        }
        pos += 6;
    }
    if (!found) {
        throw std::runtime_error("parse_judge_output: no \"Score: {number}\" token in: " + text);
    }
    if (score < 0.0 || score > 1.0) {
        std::cerr << "warning: judge score " << score << " outside [0, 1], clamping\n";
        score = std::clamp(score, 0.0, 1.0);
    }
    verdict.score = score;

    // Remarks on the remainder of the score line, "|"-separated.
    const std::size_t line_end = text.find('\n', pos);
    const std::string rest =
        text.substr(pos, line_end == std::string::npos ? std::string::npos : line_end - pos);
    std::size_t seg_start = 0;
    while (seg_start <= rest.size()) {
        std::size_t seg_end = rest.find('|', seg_start);
        if (seg_end == std::string::npos) seg_end = rest.size();
        const std::string segment = rest.substr(seg_start, seg_end - seg_start);
        if (segment.find("Likely Hallucination") != std::string::npos) {
            verdict.hallucination = true;
        }
        if (segment.find("Redundant") != std::string::npos) verdict.redundant = true;
        seg_start = seg_end + 1;
    }

    const std::size_t expl = rest.find("(Explanation:");
    if (expl != std::string::npos) {
        const std::size_t body = expl + std::string("(Explanation:").size();
        const std::size_t close = rest.rfind(')');
        const std::size_t end =
            (close != std::string::npos && close > body) ? close : rest.size();
        verdict.explanation = trim(rest.substr(body, end - body));
    }
    return verdict;
}

JudgeVerdict judge_answer(ChatProvider& judge, const std::string& question,
                          const std::string& reference, const std::string& answer) {
    if (question.empty() || reference.empty() || answer.empty()) {
        throw std::invalid_argument("judge_answer: question, reference and answer must be nonempty");
    }
    const std::string prompt = prompts::build_judge_prompt(question, reference, answer);
    std::string output = chat_complete(judge, prompt, /*temperature=*/0.0);
    try {
        return parse_judge_output(output);
    } catch (const std::runtime_error&) {
        // One re-ask at temperature 0 before giving up.
        output = chat_complete(judge, prompt, /*temperature=*/0.0);
        return parse_judge_output(output);
    }
}

MetricReport aggregate_report(std::vector<MetricRow> rows,
                              const std::vector<std::size_t>& ks) {
    MetricReport report;
    report.k = ks;
    report.rows = std::move(rows);

    bool any_included = false;
    for (const auto& row : report.rows) {
        if (!row.zero_positives) {
            if (row.recall.size() != ks.size() || row.ndcg.size() != ks.size()) {
                throw std::invalid_argument("aggregate_report: row metric arity mismatch");
            }
            any_included = true;
        }
    }
    if (!any_included) {
        throw std::invalid_argument("aggregate_report: no rows after zero-positive exclusion");
    }

    // Group rows by strategy (first-seen order), then by query.
    std::vector<std::string> strategy_order;
    for (const auto& row : report.rows) {
        if (std::find(strategy_order.begin(), strategy_order.end(), row.strategy) ==
            strategy_order.end()) {
            strategy_order.push_back(row.strategy);
        }
    }

    for (const auto& strategy : strategy_order) {
        StrategyAggregate agg;
        agg.strategy = strategy;
        agg.k = ks;
        agg.recall.assign(ks.size(), 0.0);
        agg.ndcg.assign(ks.size(), 0.0);

        // query_id -> per-entity rows, in first-seen order
        std::vector<std::string> query_order;
        std::map<std::string, std::vector<const MetricRow*>> by_query;
        for (const auto& row : report.rows) {
            if (row.strategy != strategy) continue;
            if (row.zero_positives) {
                ++agg.excluded_zero_positive;
                continue;
            }
            if (!by_query.count(row.query_id)) query_order.push_back(row.query_id);
            by_query[row.query_id].push_back(&row);
        }

        double vqa_sum = 0.0;
        std::size_t vqa_count = 0;
        for (const auto& qid : query_order) {
            const auto& entity_rows = by_query[qid];
            for (std::size_t i = 0; i < ks.size(); ++i) {
                double r = 0.0;
                double n = 0.0;
                for (const auto* row : entity_rows) {
                    r += row->recall[i];
                    n += row->ndcg[i];
                }
                agg.recall[i] += r / static_cast<double>(entity_rows.size());
                agg.ndcg[i] += n / static_cast<double>(entity_rows.size());
            }
            double q_vqa = 0.0;
            std::size_t q_vqa_n = 0;
            for (const auto* row : entity_rows) {
                if (row->vqa_score) {
                    q_vqa += *row->vqa_score;
                    ++q_vqa_n;
                }
            }
            if (q_vqa_n > 0) {
                vqa_sum += q_vqa / static_cast<double>(q_vqa_n);
                ++vqa_count;
            }
        }

        agg.n_queries = query_order.size();
        if (agg.n_queries > 0) {
            for (std::size_t i = 0; i < ks.size(); ++i) {
                agg.recall[i] /= static_cast<double>(agg.n_queries);
                agg.ndcg[i] /= static_cast<double>(agg.n_queries);
            }
        }
        if (vqa_count > 0) {
            agg.vqa_accuracy = 100.0 * vqa_sum / static_cast<double>(vqa_count);
        }
        report.aggregates.push_back(std::move(agg));
    }
    return report;
}

std::string report_to_json(const MetricReport& report) {
    json doc;
    doc["k"] = report.k;
    json aggregates = json::array();
    for (const auto& agg : report.aggregates) {
        aggregates.push_back({{"strategy", agg.strategy},
                              {"k", agg.k},
                              {"recall", agg.recall},
                              {"ndcg", agg.ndcg},
                              {"vqa_accuracy",
                               agg.vqa_accuracy ? json(*agg.vqa_accuracy) : json(nullptr)},
                              {"n_queries", agg.n_queries},
                              {"excluded_zero_positive", agg.excluded_zero_positive}});
    }
    doc["aggregates"] = aggregates;
    json rows = json::array();
    for (const auto& row : report.rows) {
        rows.push_back({{"query_id", row.query_id},
                        {"entity_index", row.entity_index},
                        {"strategy", row.strategy},
                        {"recall", row.recall},
                        {"ndcg", row.ndcg},
                        {"vqa_score", row.vqa_score ? json(*row.vqa_score) : json(nullptr)},
                        {"zero_positives", row.zero_positives}});
    }
    doc["rows"] = rows;
    return doc.dump(2);
}

std::string render_table(const MetricReport& report) {
    std::size_t label_width = std::string("Strategy").size();
    for (const auto& agg : report.aggregates) {
        label_width = std::max(label_width, agg.strategy.size());
    }

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(label_width + 2)) << "Strategy";
    for (auto k : report.k) out << std::setw(8) << ("R@" + std::to_string(k));
    for (auto k : report.k) out << std::setw(8) << ("N@" + std::to_string(k));
    out << std::setw(8) << "VQA" << '\n';

    out << std::fixed;
    for (const auto& agg : report.aggregates) {
        out << std::setw(static_cast<int>(label_width + 2)) << agg.strategy;
        out << std::setprecision(3);
        for (double v : agg.recall) out << std::setw(8) << v;
        for (double v : agg.ndcg) out << std::setw(8) << v;
        if (agg.vqa_accuracy) {
            out << std::setprecision(1) << std::setw(8) << *agg.vqa_accuracy;
        } else {
            out << std::setw(8) << "-";
        }
        out << '\n';
    }
    return out.str();
}

} // namespace visret
