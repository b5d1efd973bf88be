#include "visret/fusion.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace visret {

double rrf_score(const std::vector<std::optional<std::size_t>>& ranks, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("rrf_score: lambda must be >= 0");
    double score = 0.0;
    for (const auto& r : ranks) {
        if (!r) continue;
        if (*r == 0) throw std::invalid_argument("rrf_score: ranks are 1-based");
        score += 1.0 / (lambda + static_cast<double>(*r));
    }
    return score;
}

RankedList rrf_fuse(const std::vector<RankedList>& lists, const FusionParams& params) {
    if (lists.empty()) throw std::invalid_argument("rrf_fuse: no input lists");
    if (params.lambda < 0.0) throw std::invalid_argument("rrf_fuse: lambda must be >= 0");

    for (const auto& list : lists) {
        if (params.lambda == 0.0 && list.items.empty()) {
            throw std::invalid_argument("rrf_fuse: empty input list with lambda = 0");
        }
        std::unordered_set<std::string> ids;
        for (std::size_t i = 0; i < list.items.size(); ++i) {
            if (!ids.insert(list.items[i].image_id).second) {
                throw std::invalid_argument("rrf_fuse: duplicate id '" +
                                            list.items[i].image_id + "' in input list");
            }
            if (i > 0 && list.items[i].score > list.items[i - 1].score) {
                throw std::invalid_argument("rrf_fuse: input scores not non-increasing");
            }
        }
    }

    // Accumulate in list order so identical inputs sum identically.
    std::unordered_map<std::string, double> scores;
    std::vector<std::string> union_ids; // first-appearance order
    for (const auto& list : lists) {
        for (std::size_t pos = 0; pos < list.items.size(); ++pos) {
            const auto& id = list.items[pos].image_id;
            auto [it, inserted] = scores.try_emplace(id, 0.0);
            if (inserted) union_ids.push_back(id);
            it->second += 1.0 / (params.lambda + static_cast<double>(pos + 1));
        }
    }

    std::sort(union_ids.begin(), union_ids.end(),
              [&](const std::string& a, const std::string& b) {
                  const double sa = scores[a];
                  const double sb = scores[b];
                  if (sa != sb) return sa > sb;
                  return a < b;
              });

    RankedList out;
    out.strategy = lists.front().strategy;
    out.query_id = lists.front().query_id;
    out.entity_index = lists.front().entity_index;
    const std::size_t take =
        params.output_k ? std::min(*params.output_k, union_ids.size()) : union_ids.size();
    out.items.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.items.push_back({union_ids[i], scores[union_ids[i]]});
    }
    return out;
}

} // namespace visret
