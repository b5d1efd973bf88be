#include "visret/fusion.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

using namespace visret;

namespace {

RankedList make_list(const std::vector<std::string>& ids) {
    RankedList list;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        list.items.push_back({ids[i], 1.0 / static_cast<double>(i + 1)});
    }
    return list;
}

// Direct evaluation of the fusion sum over the union, sorted by
// (score desc, id asc). Kept independent of rrf_fuse on purpose.
std::vector<ScoredImage> brute_force_rrf(const std::vector<RankedList>& lists,
                                         double lambda) {
    std::vector<std::string> union_ids;
    for (const auto& list : lists) {
        for (const auto& item : list.items) {
            if (std::find(union_ids.begin(), union_ids.end(), item.image_id) ==
                union_ids.end()) {
                union_ids.push_back(item.image_id);
            }
        }
    }
    std::vector<ScoredImage> scored;
    for (const auto& id : union_ids) {
        double score = 0.0;
        for (const auto& list : lists) {
            for (std::size_t pos = 0; pos < list.items.size(); ++pos) {
                if (list.items[pos].image_id == id) {
                    score += 1.0 / (lambda + static_cast<double>(pos + 1));
                    break;
                }
            }
        }
        scored.push_back({id, score});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.image_id < b.image_id;
    });
    return scored;
}

std::vector<RankedList> random_lists(std::mt19937_64& rng) {
    const std::size_t m = 1 + rng() % 5;
    std::vector<std::string> pool;
    for (int i = 0; i < 50; ++i) {
        pool.push_back("item-" + std::to_string(100 + i)); // fixed-width ids
    }
    std::vector<RankedList> lists(m);
    for (auto& list : lists) {
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t len = 1 + rng() % pool.size();
        list = make_list({pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(len)});
    }
    return lists;
}

} // namespace

TEST_CASE("rrf_score closed forms") {
    CHECK(rrf_score({std::size_t{1}}, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rrf_score({std::size_t{1}, std::size_t{2}}, 1.0) ==
          doctest::Approx(1.0 / 2 + 1.0 / 3).epsilon(1e-12));
    CHECK(rrf_score({std::nullopt, std::nullopt}, 1.0) == 0.0);
    CHECK(rrf_score({std::size_t{3}, std::nullopt, std::size_t{1}}, 0.5) ==
          doctest::Approx(1.0 / 3.5 + 1.0 / 1.5).epsilon(1e-12));
    CHECK_THROWS_AS(rrf_score({std::size_t{0}}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(rrf_score({std::size_t{1}}, -0.5), std::invalid_argument);
}

TEST_CASE("rrf_fuse single list is a monotone transform for any lambda") {
    const RankedList input = make_list({"c", "a", "b"});
    for (const double lambda : {0.0, 0.5, 1.0, 60.0}) {
        const RankedList fused = rrf_fuse({input}, {.lambda = lambda});
        REQUIRE(fused.items.size() == 3);
        CHECK(fused.items[0].image_id == "c");
        CHECK(fused.items[1].image_id == "a");
        CHECK(fused.items[2].image_id == "b");
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(fused.items[i].score ==
                  doctest::Approx(1.0 / (lambda + static_cast<double>(i + 1)))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("rrf_fuse two-list fixture with id tie-break") {
    const RankedList fused =
        rrf_fuse({make_list({"a", "b", "c"}), make_list({"b", "a", "c"})}, {.lambda = 1.0});
    REQUIRE(fused.items.size() == 3);
    // a and b both score 1/2 + 1/3; the tie falls to ascending id
    CHECK(fused.items[0].image_id == "a");
    CHECK(fused.items[0].score == doctest::Approx(1.0 / 2 + 1.0 / 3).epsilon(1e-12));
    CHECK(fused.items[1].image_id == "b");
    CHECK(fused.items[1].score == doctest::Approx(1.0 / 2 + 1.0 / 3).epsilon(1e-12));
    CHECK(fused.items[2].image_id == "c");
    CHECK(fused.items[2].score == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rrf_fuse of m identical lists scales scores by m") {
    const RankedList input = make_list({"x", "y", "z"});
    const RankedList one = rrf_fuse({input}, {});
    const RankedList three = rrf_fuse({input, input, input}, {});
    REQUIRE(three.items.size() == one.items.size());
    for (std::size_t i = 0; i < one.items.size(); ++i) {
        CHECK(three.items[i].image_id == one.items[i].image_id);
        CHECK(three.items[i].score == doctest::Approx(3.0 * one.items[i].score).epsilon(1e-12));
    }
}

TEST_CASE("rrf_fuse input validation") {
    CHECK_THROWS_AS(rrf_fuse({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(rrf_fuse({make_list({})}, {.lambda = 0.0}), std::invalid_argument);
    RankedList dup = make_list({"a", "a"});
    CHECK_THROWS_WITH_AS(rrf_fuse({dup}, {}), doctest::Contains("duplicate"),
                         std::invalid_argument);
    RankedList increasing;
    increasing.items = {{"a", 0.1}, {"b", 0.9}};
    CHECK_THROWS_AS(rrf_fuse({increasing}, {}), std::invalid_argument);
    // lambda = 0 with nonempty lists is fine since ranks start at 1
    CHECK(rrf_fuse({make_list({"a"})}, {.lambda = 0.0}).items[0].score ==
          doctest::Approx(1.0));
}

TEST_CASE("rrf_fuse output_k truncates after scoring") {
    const RankedList fused = rrf_fuse(
        {make_list({"a", "b", "c", "d"})}, {.lambda = 1.0, .output_k = std::size_t{2}});
    REQUIRE(fused.items.size() == 2);
    CHECK(fused.items[0].image_id == "a");
    CHECK(fused.items[1].image_id == "b");
}

TEST_CASE("rrf_fuse matches the brute-force oracle on random inputs") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 500; ++trial) {
        const double lambda = std::vector<double>{0.5, 1.0, 60.0}[rng() % 3];
        const auto lists = random_lists(rng);
        const auto expected = brute_force_rrf(lists, lambda);
        const RankedList fused = rrf_fuse(lists, {.lambda = lambda});
        REQUIRE(fused.items.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(fused.items[i].image_id == expected[i].image_id);
            CHECK(std::abs(fused.items[i].score - expected[i].score) <= 1e-12);
        }
    }
}

TEST_CASE("rrf_fuse is invariant to input list permutation and covers the union once") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        auto lists = random_lists(rng);
        const RankedList fused = rrf_fuse(lists, {});

        std::map<std::string, int> seen;
        std::size_t union_size = 0;
        for (const auto& list : lists) {
            for (const auto& item : list.items) {
                if (seen[item.image_id]++ == 0) ++union_size;
            }
        }
        CHECK(fused.items.size() == union_size);

        // Summation order differs across permutations, so near-tied items may
        // swap; compare per-id scores instead of demanding bitwise tie order.
        std::shuffle(lists.begin(), lists.end(), rng);
        const RankedList permuted = rrf_fuse(lists, {});
        REQUIRE(permuted.items.size() == fused.items.size());
        std::map<std::string, double> original_scores;
        for (const auto& item : fused.items) original_scores[item.image_id] = item.score;
        for (std::size_t i = 0; i < permuted.items.size(); ++i) {
            REQUIRE(original_scores.count(permuted.items[i].image_id) == 1);
            CHECK(std::abs(permuted.items[i].score -
                           original_scores[permuted.items[i].image_id]) <= 1e-12);
            if (permuted.items[i].image_id != fused.items[i].image_id) {
                // only near-ties may reorder
                CHECK(std::abs(permuted.items[i].score - fused.items[i].score) <= 1e-12);
            }
        }
    }
}
