#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace visret {

using EmbeddingVector = std::vector<float>;

struct EmbeddingEntry {
    std::string image_id;
    EmbeddingVector vector;
};

/// One retrieval result: ranks are implicit 1-based positions, scores
/// non-increasing, image ids unique.
struct ScoredImage {
    std::string image_id;
    double score = 0.0;
};

struct RankedList {
    std::vector<ScoredImage> items;
    // source tag
    std::string strategy;
    std::string query_id;
    int entity_index = 0;

    std::size_t size() const { return items.size(); }
};

/// Scales v to unit Euclidean norm. Throws std::domain_error on a zero or
/// non-finite vector.
EmbeddingVector l2_normalize(const EmbeddingVector& v);

/// dot(a, b) / (|a||b|), accumulated in double and clamped to [-1, 1].
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Immutable collection of unit-normalized vectors supporting exact
/// cosine top-k search. Vectors are normalized once at build time so a
/// search is a plain dot product scan.
class VectorIndex {
public:
    static VectorIndex build(const std::vector<EmbeddingEntry>& entries);

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::string& id_at(std::size_t i) const { return ids_[i]; }
    std::span<const float> vector_at(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }

    /// Exact top-k by cosine similarity (dot product on normalized data).
    /// Scores non-increasing; ties broken by ascending image_id. k is
    /// clamped to the index size; k = 0 is an error.
    RankedList search_top_k(const EmbeddingVector& query, std::size_t k) const;

private:
    std::vector<std::string> ids_;
    std::vector<float> data_; // row-major, unit rows
    std::size_t dim_ = 0;
};

/// Binary embedding file, little-endian:
///   "VEMB" | version u32 = 1 | dim u32 | count u32 |
///   per entry: id length u16, id bytes, dim x f32
/// read_embedding_file(write_embedding_file(e)) == e, bit for bit.
void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<EmbeddingEntry>& entries);
std::vector<EmbeddingEntry> read_embedding_file(const std::filesystem::path& path);

} // namespace visret
