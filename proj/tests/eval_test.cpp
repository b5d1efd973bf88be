#include "visret/eval.hpp"

#include "visret/prompts.hpp"
#include "visret/testkit.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace visret;
using visret::test::CapturingChatProvider;

namespace {

RankedList ranked(const std::vector<std::string>& ids) {
    RankedList list;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        list.items.push_back({ids[i], 1.0 - 0.01 * static_cast<double>(i)});
    }
    return list;
}

RelevanceJudgments judge_set(const std::vector<std::string>& positives,
                             std::size_t universe) {
    RelevanceJudgments j;
    j.positives.insert(positives.begin(), positives.end());
    j.universe_size = universe;
    return j;
}

// Independent metric oracles, written against the definitions rather than
// the implementation.
double oracle_recall(const std::vector<std::string>& ids,
                     const std::set<std::string>& positives, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ids.size() && i < k; ++i) {
        hits += positives.count(ids[i]);
    }
    return static_cast<double>(hits) /
           static_cast<double>(std::min(k, positives.size()));
}

double oracle_ndcg(const std::vector<std::string>& ids,
                   const std::set<std::string>& positives, std::size_t k) {
    double dcg = 0.0;
    for (std::size_t i = 0; i < ids.size() && i < k; ++i) {
        if (positives.count(ids[i])) {
            dcg += std::log(2.0) / std::log(static_cast<double>(i) + 2.0);
        }
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, positives.size()); ++i) {
        idcg += std::log(2.0) / std::log(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

} // namespace

TEST_CASE("recall_at_k fixtures") {
    CHECK(recall_at_k(ranked({"a", "b", "c"}), judge_set({"a", "c"}, 5), 1) ==
          doctest::Approx(1.0));
    CHECK(recall_at_k(ranked({"b", "d", "e"}), judge_set({"a", "c"}, 6), 3) ==
          doctest::Approx(0.0));
    CHECK(recall_at_k(ranked({"a"}), judge_set({"a"}, 1), 10) == doctest::Approx(1.0));
    CHECK_THROWS_AS(recall_at_k(ranked({"a"}), judge_set({}, 3), 1), std::domain_error);
    CHECK_THROWS_AS(recall_at_k(ranked({"a"}), judge_set({"a"}, 1), 0),
                    std::invalid_argument);
}

TEST_CASE("ndcg_at_k fixtures") {
    const double expected =
        (1.0 / std::log2(3.0) + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
    CHECK(ndcg_at_k(ranked({"b", "a", "c"}), judge_set({"a", "c"}, 5), 3) ==
          doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(0.6934).epsilon(1e-4));

    CHECK(ndcg_at_k(ranked({"a", "c", "b"}), judge_set({"a", "c"}, 5), 3) ==
          doctest::Approx(1.0));
    CHECK(ndcg_at_k(ranked({"b", "d"}), judge_set({"a"}, 4), 2) == doctest::Approx(0.0));
}

TEST_CASE("metrics match independent oracles and N@1 equals R@1") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t universe = 2 + rng() % 49;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < universe; ++i) {
            ids.push_back("u" + std::to_string(100 + i));
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        std::set<std::string> positives;
        const std::size_t n_pos = 1 + rng() % universe;
        for (std::size_t i = 0; i < n_pos; ++i) positives.insert(ids[rng() % universe]);
        std::shuffle(ids.begin(), ids.end(), rng);
        // rankings may omit part of the universe
        const std::size_t len = 1 + rng() % universe;
        const std::vector<std::string> visible(ids.begin(),
                                               ids.begin() + static_cast<std::ptrdiff_t>(len));
        const RankedList list = ranked(visible);
        const auto judgments = judge_set({positives.begin(), positives.end()}, universe);

        for (const std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{10},
                                    std::size_t{60}}) {
            CHECK(std::abs(recall_at_k(list, judgments, k) -
                           oracle_recall(visible, positives, k)) <= 1e-9);
            CHECK(std::abs(ndcg_at_k(list, judgments, k) -
                           oracle_ndcg(visible, positives, k)) <= 1e-9);
        }
        CHECK(ndcg_at_k(list, judgments, 1) == recall_at_k(list, judgments, 1));
    }
}

TEST_CASE("metrics ignore relabeling below rank k and reward upward swaps") {
    const auto judgments = judge_set({"a", "b"}, 8);
    const RankedList base = ranked({"x", "a", "y", "b", "z"});
    const RankedList relabeled = ranked({"x", "a", "y", "b", "w"}); // swap below k
    CHECK(ndcg_at_k(base, judgments, 4) == ndcg_at_k(relabeled, judgments, 4));
    CHECK(recall_at_k(base, judgments, 4) == recall_at_k(relabeled, judgments, 4));

    const RankedList improved = ranked({"a", "x", "y", "b", "z"});
    CHECK(ndcg_at_k(improved, judgments, 4) >= ndcg_at_k(base, judgments, 4));
    CHECK(recall_at_k(improved, judgments, 1) >= recall_at_k(base, judgments, 1));
}

TEST_CASE("parse_judge_output handles the rubric's output shapes") {
    const JudgeVerdict plain = parse_judge_output("Score: 1");
    CHECK(plain.score == doctest::Approx(1.0));
    CHECK_FALSE(plain.hallucination);
    CHECK_FALSE(plain.redundant);
    CHECK_FALSE(plain.explanation.has_value());

    const JudgeVerdict halluc = parse_judge_output("Score: 0.5 | Likely Hallucination");
    CHECK(halluc.score == doctest::Approx(0.5));
    CHECK(halluc.hallucination);
    CHECK_FALSE(halluc.redundant);

    const JudgeVerdict redundant = parse_judge_output("Score: 1 | Redundant");
    CHECK(redundant.redundant);
    CHECK_FALSE(redundant.hallucination);

    const JudgeVerdict both =
        parse_judge_output("Score: 0.5 | Likely Hallucination | Redundant");
    CHECK(both.hallucination);
    CHECK(both.redundant);

    const JudgeVerdict piped = parse_judge_output(
        "Score: 0.5 | Likely Hallucination | (Explanation: not white spot but band)");
    CHECK(piped.hallucination);
    REQUIRE(piped.explanation.has_value());
    CHECK(*piped.explanation == "not white spot but band");

    // the inline form the rubric's own examples use
    const JudgeVerdict inline_expl = parse_judge_output(
        "Score: 0.5 | Likely Hallucination (Explanation: not white spot but band. Not "
        "mentioning the tip)");
    CHECK(inline_expl.hallucination);
    REQUIRE(inline_expl.explanation.has_value());
    CHECK(*inline_expl.explanation ==
          "not white spot but band. Not mentioning the tip");

    const JudgeVerdict bare_expl =
        parse_judge_output("Score: 0.5 (Explanation: not mentioning black and white)");
    CHECK_FALSE(bare_expl.hallucination);
    CHECK(bare_expl.explanation == "not mentioning black and white");

    const JudgeVerdict zero = parse_judge_output("Score: 0");
    CHECK(zero.score == 0.0);
    CHECK_FALSE(zero.hallucination);
}

TEST_CASE("parse_judge_output edge cases") {
    CHECK_THROWS_AS(parse_judge_output("the answer seems fine to me"), std::runtime_error);
    CHECK_THROWS_AS(parse_judge_output("Score: n/a"), std::runtime_error);
    CHECK(parse_judge_output("Score: 1.5").score == doctest::Approx(1.0)); // clamped
    CHECK(parse_judge_output("preamble\nScore: 0.25 | Redundant\ntrailing").redundant);
    // flags on a later line do not leak into the score line
    const JudgeVerdict v = parse_judge_output("Score: 1\nRedundant remark afterwards");
    CHECK_FALSE(v.redundant);
}

TEST_CASE("judge_answer substitutes the rubric and re-asks once") {
    CapturingChatProvider judge("Score: 1 | Redundant");
    const JudgeVerdict verdict =
        judge_answer(judge, "Are the leaves hairy?", "yes", "Yes, covered in small hairs.");
    CHECK(verdict.score == doctest::Approx(1.0));
    CHECK(verdict.redundant);
    CHECK(judge.last_temperature == 0.0);
    CHECK(judge.last_prompt.find("Question: Are the leaves hairy?") != std::string::npos);
    CHECK(judge.last_prompt.find("Reference Answer: yes") != std::string::npos);
    CHECK(judge.last_prompt.find("Student Answer: Yes, covered in small hairs.") !=
          std::string::npos);
    CHECK(judge.last_prompt.find("Please evaluate the answer to a question") !=
          std::string::npos);

    class FlakyJudge : public ChatProvider {
    public:
        std::string complete(const ChatRequest&) override {
            return ++calls == 1 ? "no score here" : "Score: 0.5";
        }
        const std::string& model_name() const override { return model_; }
        int calls = 0;

    private:
        std::string model_ = "flaky-judge";
    };
    FlakyJudge flaky;
    CHECK(judge_answer(flaky, "q", "r", "a").score == doctest::Approx(0.5));
    CHECK(flaky.calls == 2);

    MockChatProvider hopeless;
    hopeless.add_substring("Please evaluate", "still prose without a score");
    CHECK_THROWS_AS(judge_answer(hopeless, "q", "r", "a"), std::runtime_error);
    CHECK(hopeless.calls() == 2); // asked, re-asked, gave up

    CHECK_THROWS_AS(judge_answer(judge, "", "r", "a"), std::invalid_argument);
}

TEST_CASE("aggregate_report averages queries, not entity rows") {
    std::vector<MetricRow> rows;
    rows.push_back({"q1", 0, "s", {0.0}, {0.0}, std::nullopt, false});
    rows.push_back({"q2", 0, "s", {1.0}, {1.0}, std::nullopt, false});
    // a two-entity query whose slots disagree: contributes 0.5, not two rows
    rows.push_back({"q3", 0, "s", {0.0}, {0.0}, std::nullopt, false});
    rows.push_back({"q3", 1, "s", {1.0}, {1.0}, std::nullopt, false});

    const MetricReport report = aggregate_report(rows, {1});
    REQUIRE(report.aggregates.size() == 1);
    const auto& agg = report.aggregates[0];
    CHECK(agg.n_queries == 3);
    CHECK(agg.recall[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(agg.ndcg[0] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("aggregate_report handles single rows, exclusions and vqa means") {
    std::vector<MetricRow> rows;
    rows.push_back({"q1", 0, "s", {0.25}, {0.75}, 0.5, false});
    const MetricReport single = aggregate_report(rows, {1});
    CHECK(single.aggregates[0].recall[0] == doctest::Approx(0.25));
    CHECK(single.aggregates[0].ndcg[0] == doctest::Approx(0.75));
    REQUIRE(single.aggregates[0].vqa_accuracy.has_value());
    CHECK(*single.aggregates[0].vqa_accuracy == doctest::Approx(50.0));

    rows.push_back({"q2", 0, "s", {}, {}, std::nullopt, true}); // zero positives
    const MetricReport mixed = aggregate_report(rows, {1});
    CHECK(mixed.aggregates[0].n_queries == 1);
    CHECK(mixed.aggregates[0].excluded_zero_positive == 1);

    std::vector<MetricRow> only_excluded;
    only_excluded.push_back({"q", 0, "s", {}, {}, std::nullopt, true});
    CHECK_THROWS_AS(aggregate_report(only_excluded, {1}), std::invalid_argument);
    CHECK_THROWS_AS(aggregate_report({}, {1}), std::invalid_argument);
}

TEST_CASE("report rendering carries the table-style columns") {
    std::vector<MetricRow> rows;
    rows.push_back({"q1", 0, "original_query", {0.2, 0.5, 0.7}, {0.2, 0.4, 0.4},
                    std::nullopt, false});
    rows.push_back({"q1", 0, "visret", {0.3, 0.6, 0.8}, {0.3, 0.5, 0.5}, 0.7, false});
    const MetricReport report = aggregate_report(rows, {1, 10, 30});

    const std::string table = render_table(report);
    for (const char* column : {"R@1", "R@10", "R@30", "N@1", "N@10", "N@30", "VQA"}) {
        CHECK(table.find(column) != std::string::npos);
    }
    CHECK(table.find("original_query") != std::string::npos);
    CHECK(table.find("visret") != std::string::npos);

    const std::string json_text = report_to_json(report);
    for (const char* key :
         {"\"strategy\"", "\"recall\"", "\"ndcg\"", "\"vqa_accuracy\"", "\"n_queries\"",
          "\"excluded_zero_positive\"", "\"rows\""}) {
        CHECK(json_text.find(key) != std::string::npos);
    }
}
