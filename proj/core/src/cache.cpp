#include "visret/cache.hpp"

#include "visret/digest.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <unistd.h>

namespace visret {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cache: cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void atomic_write(const std::filesystem::path& target, const std::string& bytes) {
    static std::atomic<unsigned> counter{0};
    std::ostringstream suffix;
    suffix << ".tmp." << ::getpid() << "." << counter.fetch_add(1);
    const std::filesystem::path tmp = target.string() + suffix.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cache: cannot open " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw std::runtime_error("cache: write failed on " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
}

// Length-prefixed framing for multi-payload cache values.
std::string encode_payload_list(const std::vector<std::string>& payloads) {
    std::string out;
    auto put_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    put_u32(static_cast<std::uint32_t>(payloads.size()));
    for (const auto& p : payloads) {
        put_u32(static_cast<std::uint32_t>(p.size()));
        out.append(p);
    }
    return out;
}

std::vector<std::string> decode_payload_list(const std::string& bytes) {
    std::size_t pos = 0;
    auto get_u32 = [&]() -> std::uint32_t {
        if (bytes.size() - pos < 4) throw std::runtime_error("cache: truncated payload list");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i]))
                 << (8 * i);
        }
        pos += 4;
        return v;
    };
    const std::uint32_t count = get_u32();
    std::vector<std::string> payloads;
    payloads.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = get_u32();
        if (bytes.size() - pos < len) throw std::runtime_error("cache: truncated payload list");
        payloads.emplace_back(bytes.data() + pos, len);
        pos += len;
    }
    return payloads;
}

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

constexpr char kSep = '\x1f';

} // namespace

ContentCache::ContentCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ContentCache::entry_path(const std::string& kind,
                                               const std::string& key_digest) const {
    return dir_ / kind / (key_digest + ".bin");
}

std::optional<std::string> ContentCache::lookup(const std::string& kind,
                                                const std::string& key_material) const {
    const std::string digest = sha256_hex(key_material);
    const auto bin = entry_path(kind, digest);
    const auto meta = std::filesystem::path(bin).replace_extension(".json");
    std::error_code ec;
    if (!std::filesystem::exists(bin, ec) || !std::filesystem::exists(meta, ec)) {
        misses_.fetch_add(1);
        return std::nullopt;
    }
    try {
        std::string payload = read_file(bin);
        const json j = json::parse(read_file(meta));
        if (j.at("payload_sha256").get<std::string>() != sha256_hex(payload)) {
            std::cerr << "warning: corrupt cache entry " << bin.string()
                      << " (digest mismatch), recomputing\n";
            misses_.fetch_add(1);
            return std::nullopt;
        }
        hits_.fetch_add(1);
        return payload;
    } catch (const std::exception& e) {
        std::cerr << "warning: unreadable cache entry " << bin.string() << " (" << e.what()
                  << "), recomputing\n";
        misses_.fetch_add(1);
        return std::nullopt;
    }
}

std::string ContentCache::get_or_compute(const std::string& kind,
                                         const std::string& key_material,
                                         const std::function<std::string()>& compute,
                                         const std::map<std::string, std::string>& metadata) {
    if (auto hit = lookup(kind, key_material)) return *hit;

    std::string payload = compute();

    const std::string digest = sha256_hex(key_material);
    const auto bin = entry_path(kind, digest);
    std::filesystem::create_directories(bin.parent_path());

    json meta;
    meta["key_sha256"] = digest;
    meta["payload_sha256"] = sha256_hex(payload);
    meta["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
    for (const auto& [k, v] : metadata) meta[k] = v;

    atomic_write(bin, payload);
    atomic_write(std::filesystem::path(bin).replace_extension(".json"), meta.dump(2));
    return payload;
}

std::string CachingChatProvider::complete(const ChatRequest& request) {
    std::string key = "chat";
    key += kSep;
    key += inner_.model_name();
    key += kSep;
    key += format_double(request.temperature);
    key += kSep;
    key += request.prompt;
    for (const auto& image : request.images) {
        key += kSep;
        key += sha256_hex(image);
    }
    return cache_.get_or_compute("chat", key, [&] { return inner_.complete(request); },
                                 {{"model", inner_.model_name()},
                                  {"temperature", format_double(request.temperature)}});
}

std::vector<std::string> CachingT2IProvider::generate(const std::string& instruction_text,
                                                      int m, ImageQuality quality) {
    std::string key = "t2i";
    key += kSep;
    key += inner_.model_name();
    key += kSep;
    key += instruction_text;
    key += kSep;
    key += std::to_string(m);
    key += kSep;
    key += to_string(quality);
    const std::string value = cache_.get_or_compute(
        "t2i", key,
        [&] { return encode_payload_list(inner_.generate(instruction_text, m, quality)); },
        {{"model", inner_.model_name()},
         {"m", std::to_string(m)},
         {"quality", to_string(quality)}});
    return decode_payload_list(value);
}

EmbeddingVector CachingEmbeddingProvider::embed_cached(
    const std::string& kind, const std::string& key,
    const std::function<EmbeddingVector()>& compute) {
    const std::string value = cache_.get_or_compute(
        kind, key,
        [&] {
            const EmbeddingVector v = compute();
            std::string bytes(v.size() * sizeof(float), '\0');
            std::memcpy(bytes.data(), v.data(), bytes.size());
            return bytes;
        },
        {{"model", inner_.model_name()}});
    if (value.size() % sizeof(float) != 0) {
        throw std::runtime_error("cache: embedding payload size not a float multiple");
    }
    EmbeddingVector v(value.size() / sizeof(float));
    std::memcpy(v.data(), value.data(), value.size());
    return v;
}

EmbeddingVector CachingEmbeddingProvider::embed_text(const std::string& text) {
    std::string key = "embed_text";
    key += kSep;
    key += inner_.model_name();
    key += kSep;
    key += text;
    return embed_cached("embed_text", key, [&] { return inner_.embed_text(text); });
}

EmbeddingVector CachingEmbeddingProvider::embed_image(const std::string& image_bytes) {
    std::string key = "embed_image";
    key += kSep;
    key += inner_.model_name();
    key += kSep;
    key += sha256_hex(image_bytes);
    return embed_cached("embed_image", key, [&] { return inner_.embed_image(image_bytes); });
}

} // namespace visret
