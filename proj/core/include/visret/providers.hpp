#pragma once

#include "visret/corpus.hpp"
#include "visret/embed.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace visret {

enum class EndpointKind { Chat, TextToImage, Embedding };

/// Declaration of one external model service. Credentials are read from the
/// environment variable named in api_key_env, never stored in config values.
struct ProviderEndpoint {
    EndpointKind kind = EndpointKind::Chat;
    std::string base_url;
    std::string model_name;
    std::string api_key_env;
    double timeout_s = 60.0;
    int max_retries = 3;
};

enum class ImageQuality { Low, High };

std::string to_string(ImageQuality q);

struct T2IInstruction {
    std::string text;
    std::string source_query_id;
    int entity_index = 0;
};

struct GeneratedImage {
    std::string bytes;
    std::string content_hash; // sha256 hex of bytes
    T2IInstruction instruction;
    int generation_index = 1; // 1..m
};

class ProviderError : public std::runtime_error {
public:
    enum class Kind { Transient, Auth, BadRequest, Fatal };

    ProviderError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }
    bool transient() const { return kind_ == Kind::Transient; }

private:
    Kind kind_;
};

struct ChatRequest {
    std::string prompt;
    double temperature = 0.0;
    std::vector<std::string> images; // raw image payloads attached to the turn
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual const std::string& model_name() const = 0;
};

class T2IProvider {
public:
    virtual ~T2IProvider() = default;
    /// One request asking the provider for m samples of the instruction.
    virtual std::vector<std::string> generate(const std::string& instruction_text, int m,
                                              ImageQuality quality) = 0;
    virtual const std::string& model_name() const = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed_text(const std::string& text) = 0;
    virtual EmbeddingVector embed_image(const std::string& image_bytes) = 0;
    virtual const std::string& model_name() const = 0;
};

/// Exponential backoff: initial_delay doubling per attempt, +-jitter, only
/// for transient failures, at most max_retries retries after the first try.
struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_delay{1000};
    double multiplier = 2.0;
    double jitter = 0.1;
};

/// Runs fn, retrying transient ProviderErrors per the policy. Total attempts
/// are bounded by max_retries + 1; any other error surfaces immediately.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    std::chrono::duration<double, std::milli> delay = policy.initial_delay;
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (!e.transient() || attempt >= policy.max_retries) throw;
        }
        if (delay.count() > 0) {
            static thread_local std::mt19937_64 rng{std::random_device{}()};
            std::uniform_real_distribution<double> spread(1.0 - policy.jitter,
                                                          1.0 + policy.jitter);
            std::this_thread::sleep_for(delay * spread(rng));
        }
        delay *= policy.multiplier;
    }
}

/// Reads the credential for an endpoint; throws ProviderError(Auth) before
/// any request when the variable is missing or empty.
std::string require_api_key(const ProviderEndpoint& endpoint);

/// Chat completion through a provider. Thin over ChatProvider::complete;
/// HTTP-backed providers retry transient failures internally.
std::string chat_complete(ChatProvider& provider, const std::string& prompt,
                          double temperature = 0.0,
                          const std::vector<std::string>& images = {});

/// Rephrases a query into the short descriptive phrase used both as the
/// query-expansion text and as the body of the T2I instruction. The prompt
/// is selected by dataset kind; multi-entity requires entity_name.
std::string rephrase_for_t2i(ChatProvider& provider, DatasetKind kind,
                             const std::string& query_text,
                             const std::optional<std::string>& entity_name = std::nullopt);

/// "Generate a small image of the " + rephrased, exactly.
T2IInstruction build_t2i_instruction(const std::string& rephrased,
                                     const std::string& source_query_id,
                                     int entity_index);

/// Asks the provider for m samples of the instruction in a single request
/// and stamps each payload with its content hash and generation index.
std::vector<GeneratedImage> generate_images(T2IProvider& provider,
                                            const T2IInstruction& instruction, int m,
                                            ImageQuality quality = ImageQuality::High);

/// Wraps an embedding provider and rejects dimension drift across calls.
class DriftGuardEmbedder : public EmbeddingProvider {
public:
    explicit DriftGuardEmbedder(EmbeddingProvider& inner) : inner_(inner) {}

    EmbeddingVector embed_text(const std::string& text) override {
        return check(inner_.embed_text(text));
    }
    EmbeddingVector embed_image(const std::string& image_bytes) override {
        return check(inner_.embed_image(image_bytes));
    }
    const std::string& model_name() const override { return inner_.model_name(); }

private:
    EmbeddingVector check(EmbeddingVector v);

    EmbeddingProvider& inner_;
    std::atomic<std::size_t> expected_dim_{0};
};

/// Global in-flight cap shared by concurrent provider calls.
class InflightLimiter {
public:
    explicit InflightLimiter(int max_inflight);

    class Token {
    public:
        explicit Token(InflightLimiter& limiter);
        ~Token();
        Token(const Token&) = delete;
        Token& operator=(const Token&) = delete;

    private:
        InflightLimiter& limiter_;
    };

private:
    void acquire();
    void release();

    std::mutex mutex_;
    std::condition_variable cv_;
    int available_;
};

} // namespace visret
