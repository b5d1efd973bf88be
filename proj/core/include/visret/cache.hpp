#pragma once

#include "visret/providers.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace visret {

/// Content-addressed cache of provider outputs. Entries live at
/// <dir>/<kind>/<sha256(key_material)>.bin with a sibling .json metadata
/// file. Writes are write-temp-then-rename, so concurrent identical
/// computes may duplicate work but never corrupt an entry.
class ContentCache {
public:
    explicit ContentCache(std::filesystem::path dir);

    /// Returns the cached payload, or nullopt on miss. A payload whose
    /// digest disagrees with its metadata is treated as a miss with a
    /// warning on stderr.
    std::optional<std::string> lookup(const std::string& kind,
                                      const std::string& key_material) const;

    /// Cached payload if present; otherwise runs compute, persists the
    /// result atomically and returns it.
    std::string get_or_compute(const std::string& kind, const std::string& key_material,
                               const std::function<std::string()>& compute,
                               const std::map<std::string, std::string>& metadata = {});

    const std::filesystem::path& dir() const { return dir_; }
    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }

private:
    std::filesystem::path entry_path(const std::string& kind,
                                     const std::string& key_digest) const;

    std::filesystem::path dir_;
    mutable std::atomic<std::size_t> hits_{0};
    mutable std::atomic<std::size_t> misses_{0};
};

/// Chat provider memoized on (model, temperature, prompt, image hashes).
class CachingChatProvider : public ChatProvider {
public:
    CachingChatProvider(ChatProvider& inner, ContentCache& cache)
        : inner_(inner), cache_(cache) {}

    std::string complete(const ChatRequest& request) override;
    const std::string& model_name() const override { return inner_.model_name(); }

private:
    ChatProvider& inner_;
    ContentCache& cache_;
};

/// T2I provider memoized on (model, instruction, m, quality).
class CachingT2IProvider : public T2IProvider {
public:
    CachingT2IProvider(T2IProvider& inner, ContentCache& cache)
        : inner_(inner), cache_(cache) {}

    std::vector<std::string> generate(const std::string& instruction_text, int m,
                                      ImageQuality quality) override;
    const std::string& model_name() const override { return inner_.model_name(); }

private:
    T2IProvider& inner_;
    ContentCache& cache_;
};

/// Embedding provider memoized on (model, input digest).
class CachingEmbeddingProvider : public EmbeddingProvider {
public:
    CachingEmbeddingProvider(EmbeddingProvider& inner, ContentCache& cache)
        : inner_(inner), cache_(cache) {}

    EmbeddingVector embed_text(const std::string& text) override;
    EmbeddingVector embed_image(const std::string& image_bytes) override;
    const std::string& model_name() const override { return inner_.model_name(); }

private:
    EmbeddingVector embed_cached(const std::string& kind, const std::string& key,
                                 const std::function<EmbeddingVector()>& compute);

    EmbeddingProvider& inner_;
    ContentCache& cache_;
};

} // namespace visret
