#include "visret/embed.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace visret {

namespace {

constexpr char kMagic[4] = {'V', 'E', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u16_le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f32_le(std::string& out, float f) {
    put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
public:
    Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(data_[pos_]) |
                          static_cast<std::uint16_t>(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::size_t n) const {
        if (size_ - pos_ < n) {
            throw std::runtime_error("embedding file: truncated");
        }
    }
    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

void check_finite(const EmbeddingVector& v, const char* what) {
    for (float x : v) {
        if (!std::isfinite(x)) {
            throw std::domain_error(std::string(what) + ": non-finite component");
        }
    }
}

double norm(const EmbeddingVector& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

} // namespace

EmbeddingVector l2_normalize(const EmbeddingVector& v) {
    if (v.empty()) throw std::domain_error("l2_normalize: empty vector");
    check_finite(v, "l2_normalize");
    const double n = norm(v);
    if (n == 0.0) throw std::domain_error("l2_normalize: zero vector");
    EmbeddingVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(v[i] / n);
    }
    return out;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    }
    if (a.empty()) throw std::domain_error("cosine_similarity: empty vector");
    check_finite(a, "cosine_similarity");
    check_finite(b, "cosine_similarity");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw std::domain_error("cosine_similarity: zero vector");
    }
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

VectorIndex VectorIndex::build(const std::vector<EmbeddingEntry>& entries) {
    if (entries.empty()) {
        throw std::invalid_argument("VectorIndex: no entries");
    }
    const std::size_t dim = entries.front().vector.size();
    if (dim == 0) throw std::invalid_argument("VectorIndex: zero-dimensional entry");

    VectorIndex idx;
    idx.dim_ = dim;
    idx.ids_.reserve(entries.size());
    idx.data_.reserve(entries.size() * dim);
    std::unordered_set<std::string> seen;
    for (const auto& e : entries) {
        if (e.vector.size() != dim) {
            throw std::invalid_argument("VectorIndex: dimension mismatch for id '" +
                                        e.image_id + "'");
        }
        if (!seen.insert(e.image_id).second) {
            throw std::invalid_argument("VectorIndex: duplicate id '" + e.image_id + "'");
        }
        EmbeddingVector unit = l2_normalize(e.vector);
        idx.ids_.push_back(e.image_id);
        idx.data_.insert(idx.data_.end(), unit.begin(), unit.end());
    }
    return idx;
}

RankedList VectorIndex::search_top_k(const EmbeddingVector& query, std::size_t k) const {
    if (k == 0) throw std::invalid_argument("search_top_k: k must be >= 1");
    if (query.size() != dim_) {
        throw std::invalid_argument("search_top_k: query dimension mismatch");
    }
    EmbeddingVector q = l2_normalize(query);

    const std::size_t n = size();
    std::vector<std::size_t> order(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
        double dot = 0.0;
        const float* row = data_.data() + i * dim_;
        for (std::size_t d = 0; d < dim_; ++d) {
            dot += static_cast<double>(row[d]) * q[d];
        }
        scores[i] = dot;
    }

    const std::size_t take = std::min(k, n);
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids_[a] < ids_[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                      order.end(), better);

    RankedList out;
    out.items.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.items.push_back({ids_[order[i]], scores[order[i]]});
    }
    return out;
}

void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<EmbeddingEntry>& entries) {
    std::size_t dim = entries.empty() ? 0 : entries.front().vector.size();
    std::unordered_set<std::string> seen;
    for (const auto& e : entries) {
        if (e.vector.size() != dim) {
            throw std::invalid_argument("write_embedding_file: dimension mismatch for id '" +
                                        e.image_id + "'");
        }
        if (e.image_id.size() > 0xffff) {
            throw std::invalid_argument("write_embedding_file: id too long");
        }
        if (!seen.insert(e.image_id).second) {
            throw std::invalid_argument("write_embedding_file: duplicate id '" +
                                        e.image_id + "'");
        }
    }

    std::string buf;
    buf.append(kMagic, 4);
    put_u32_le(buf, kVersion);
    put_u32_le(buf, static_cast<std::uint32_t>(dim));
    put_u32_le(buf, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u16_le(buf, static_cast<std::uint16_t>(e.image_id.size()));
        buf.append(e.image_id);
        for (float f : e.vector) put_f32_le(buf, f);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_embedding_file: cannot open " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write_embedding_file: write failed on " + path.string());
}

std::vector<EmbeddingEntry> read_embedding_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_embedding_file: cannot open " + path.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r(reinterpret_cast<const unsigned char*>(raw.data()), raw.size());
    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw std::runtime_error("read_embedding_file: bad magic in " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("read_embedding_file: unsupported version " +
                                 std::to_string(version));
    }
    const std::uint32_t dim = r.u32();
    const std::uint32_t count = r.u32();

    std::vector<EmbeddingEntry> entries;
    entries.reserve(count);
    std::unordered_set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        EmbeddingEntry e;
        const std::uint16_t id_len = r.u16();
        e.image_id = r.bytes(id_len);
        if (!seen.insert(e.image_id).second) {
            throw std::runtime_error("read_embedding_file: duplicate id '" + e.image_id + "'");
        }
        e.vector.resize(dim);
        for (std::uint32_t d = 0; d < dim; ++d) e.vector[d] = r.f32();
        entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) {
        throw std::runtime_error("read_embedding_file: trailing bytes in " + path.string());
    }
    return entries;
}

} // namespace visret
