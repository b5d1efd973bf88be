#pragma once

#include "visret/embed.hpp"

#include <optional>
#include <vector>

namespace visret {

struct FusionParams {
    double lambda = 1.0;
    std::optional<std::size_t> output_k;
};

/// Reciprocal-rank score of one item: sum of 1/(lambda + rank) over the
/// lists the item appears in. Absent lists contribute 0.
double rrf_score(const std::vector<std::optional<std::size_t>>& ranks, double lambda);

/// Fuses m ranked lists: the union of all ids ordered by descending RRF
/// score, ties broken by ascending image_id. Output scores are the RRF
/// scores; truncated to params.output_k when set.
RankedList rrf_fuse(const std::vector<RankedList>& lists, const FusionParams& params = {});

} // namespace visret
