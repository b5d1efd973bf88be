#pragma once

#include "visret/providers.hpp"

#include <atomic>
#include <memory>

namespace httplib {
class Client;
}

namespace visret {

/// Shared pieces of the OpenAI-style HTTP adapters: endpoint parsing, auth
/// header, retry classification and the request counter.
class HttpProviderBase {
public:
    explicit HttpProviderBase(ProviderEndpoint endpoint, RetryPolicy retry = {},
                              InflightLimiter* limiter = nullptr);
    ~HttpProviderBase();

    const std::string& model_name() const { return endpoint_.model_name; }
    std::size_t request_count() const { return request_count_.load(); }

protected:
    /// POSTs a JSON body, classifies HTTP failures into ProviderError kinds
    /// and retries transient ones per the policy. Returns the response body.
    std::string post_json(const std::string& path, const std::string& body);

    ProviderEndpoint endpoint_;

private:
    RetryPolicy retry_;
    InflightLimiter* limiter_;
    std::string api_key_;
    std::string path_prefix_;
    std::unique_ptr<httplib::Client> client_;
    std::atomic<std::size_t> request_count_{0};
};

/// Chat completions adapter (POST {base_url}/chat/completions). Image
/// payloads are attached as base64 data URLs in multi-part message content.
class HttpChatProvider : public ChatProvider, private HttpProviderBase {
public:
    explicit HttpChatProvider(ProviderEndpoint endpoint, RetryPolicy retry = {},
                              InflightLimiter* limiter = nullptr);

    std::string complete(const ChatRequest& request) override;
    const std::string& model_name() const override { return HttpProviderBase::model_name(); }
    using HttpProviderBase::request_count;
};

/// Image generations adapter (POST {base_url}/images/generations), asking
/// for n = m base64 samples in one request.
class HttpT2IProvider : public T2IProvider, private HttpProviderBase {
public:
    explicit HttpT2IProvider(ProviderEndpoint endpoint, RetryPolicy retry = {},
                             InflightLimiter* limiter = nullptr);

    std::vector<std::string> generate(const std::string& instruction_text, int m,
                                      ImageQuality quality) override;
    const std::string& model_name() const override { return HttpProviderBase::model_name(); }
    using HttpProviderBase::request_count;
};

/// Embeddings adapter (POST {base_url}/embeddings). Text is sent verbatim;
/// images are sent as base64 data URLs with "modality": "image".
class HttpEmbeddingProvider : public EmbeddingProvider, private HttpProviderBase {
public:
    explicit HttpEmbeddingProvider(ProviderEndpoint endpoint, RetryPolicy retry = {},
                                   InflightLimiter* limiter = nullptr);

    EmbeddingVector embed_text(const std::string& text) override;
    EmbeddingVector embed_image(const std::string& image_bytes) override;
    const std::string& model_name() const override { return HttpProviderBase::model_name(); }
    using HttpProviderBase::request_count;
};

} // namespace visret
