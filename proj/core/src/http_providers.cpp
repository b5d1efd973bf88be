#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "visret/http_providers.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <stdexcept>

namespace visret {

using nlohmann::json;

namespace {

std::string base64_encode(const std::string& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) {
        throw std::invalid_argument("base64_decode: length not a multiple of 4");
    }
    std::string out(3 * (text.size() / 4), '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw std::invalid_argument("base64_decode: invalid input");
    std::size_t size = static_cast<std::size_t>(n);
    // EVP_DecodeBlock counts '=' padding as data
    if (!text.empty() && text[text.size() - 1] == '=') --size;
    if (text.size() >= 2 && text[text.size() - 2] == '=') --size;
    out.resize(size);
    return out;
}

std::string data_url_png(const std::string& bytes) {
    return "data:image/png;base64," + base64_encode(bytes);
}

ProviderError::Kind classify_status(int status) {
    if (status == 408 || status == 429 || status >= 500) {
        return ProviderError::Kind::Transient;
    }
    if (status == 401 || status == 403) return ProviderError::Kind::Auth;
    return ProviderError::Kind::BadRequest;
}

// Splits "https://host:port/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("malformed base_url '" + base_url + "'");
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

} // namespace

HttpProviderBase::HttpProviderBase(ProviderEndpoint endpoint, RetryPolicy retry,
                                   InflightLimiter* limiter)
    : endpoint_(std::move(endpoint)), retry_(retry), limiter_(limiter) {
    retry_.max_retries = endpoint_.max_retries;
    api_key_ = require_api_key(endpoint_);
    auto [origin, prefix] = split_base_url(endpoint_.base_url);
    path_prefix_ = prefix;
    client_ = std::make_unique<httplib::Client>(origin);
    const auto timeout =
        std::chrono::milliseconds(static_cast<long>(endpoint_.timeout_s * 1000));
    client_->set_connection_timeout(timeout);
    client_->set_read_timeout(timeout);
    client_->set_write_timeout(timeout);
}

HttpProviderBase::~HttpProviderBase() = default;

std::string HttpProviderBase::post_json(const std::string& path, const std::string& body) {
    return with_retries(retry_, [&]() -> std::string {
        std::optional<InflightLimiter::Token> token;
        if (limiter_) token.emplace(*limiter_);

        request_count_.fetch_add(1);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
        auto result = client_->Post(path_prefix_ + path, headers, body, "application/json");
        if (!result) {
            throw ProviderError(ProviderError::Kind::Transient,
                                "request to " + endpoint_.base_url + path + " failed: " +
                                    httplib::to_string(result.error()));
        }
        if (result->status != 200) {
            throw ProviderError(classify_status(result->status),
                                "HTTP " + std::to_string(result->status) + " from " +
                                    endpoint_.base_url + path + ": " + result->body);
        }
        return result->body;
    });
}

HttpChatProvider::HttpChatProvider(ProviderEndpoint endpoint, RetryPolicy retry,
                                   InflightLimiter* limiter)
    : HttpProviderBase(std::move(endpoint), retry, limiter) {
    if (endpoint_.kind != EndpointKind::Chat) {
        throw std::invalid_argument("HttpChatProvider: endpoint kind is not Chat");
    }
}

std::string HttpChatProvider::complete(const ChatRequest& request) {
    json content;
    if (request.images.empty()) {
        content = request.prompt;
    } else {
        content = json::array();
        content.push_back({{"type", "text"}, {"text", request.prompt}});
        for (const auto& image : request.images) {
            content.push_back({{"type", "image_url"},
                               {"image_url", {{"url", data_url_png(image)}}}});
        }
    }
    json body = {{"model", endpoint_.model_name},
                 {"temperature", request.temperature},
                 {"messages", json::array({{{"role", "user"}, {"content", content}}})}};

    const std::string response = post_json("/chat/completions", body.dump());
    try {
        json j = json::parse(response);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Fatal,
                            std::string("unexpected chat response shape: ") + e.what());
    }
}

HttpT2IProvider::HttpT2IProvider(ProviderEndpoint endpoint, RetryPolicy retry,
                                 InflightLimiter* limiter)
    : HttpProviderBase(std::move(endpoint), retry, limiter) {
    if (endpoint_.kind != EndpointKind::TextToImage) {
        throw std::invalid_argument("HttpT2IProvider: endpoint kind is not TextToImage");
    }
}

std::vector<std::string> HttpT2IProvider::generate(const std::string& instruction_text,
                                                   int m, ImageQuality quality) {
    if (m < 1) throw std::invalid_argument("generate: m must be >= 1");
    json body = {{"model", endpoint_.model_name},
                 {"prompt", instruction_text},
                 {"n", m},
                 {"quality", to_string(quality)}};

    const std::string response = post_json("/images/generations", body.dump());
    try {
        json j = json::parse(response);
        std::vector<std::string> payloads;
        for (const auto& item : j.at("data")) {
            payloads.push_back(base64_decode(item.at("b64_json").get<std::string>()));
        }
        return payloads;
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Fatal,
                            std::string("unexpected image response shape: ") + e.what());
    }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(ProviderEndpoint endpoint, RetryPolicy retry,
                                             InflightLimiter* limiter)
    : HttpProviderBase(std::move(endpoint), retry, limiter) {
    if (endpoint_.kind != EndpointKind::Embedding) {
        throw std::invalid_argument("HttpEmbeddingProvider: endpoint kind is not Embedding");
    }
}

EmbeddingVector HttpEmbeddingProvider::embed_text(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("embed_text: empty input");
    json body = {{"model", endpoint_.model_name}, {"input", json::array({text})}};
    const std::string response = post_json("/embeddings", body.dump());
    try {
        json j = json::parse(response);
        return j.at("data").at(0).at("embedding").get<EmbeddingVector>();
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Fatal,
                            std::string("unexpected embedding response shape: ") + e.what());
    }
}

EmbeddingVector HttpEmbeddingProvider::embed_image(const std::string& image_bytes) {
    if (image_bytes.empty()) throw std::invalid_argument("embed_image: empty input");
    json body = {{"model", endpoint_.model_name},
                 {"input", json::array({data_url_png(image_bytes)})},
                 {"modality", "image"}};
    const std::string response = post_json("/embeddings", body.dump());
    try {
        json j = json::parse(response);
        return j.at("data").at(0).at("embedding").get<EmbeddingVector>();
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Fatal,
                            std::string("unexpected embedding response shape: ") + e.what());
    }
}

} // namespace visret
