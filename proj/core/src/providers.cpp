#include "visret/providers.hpp"

#include "visret/digest.hpp"
#include "visret/prompts.hpp"

#include <cstdlib>

namespace visret {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

} // namespace

std::string to_string(ImageQuality q) {
    return q == ImageQuality::Low ? "low" : "high";
}

std::string require_api_key(const ProviderEndpoint& endpoint) {
    if (endpoint.api_key_env.empty()) {
        throw ProviderError(ProviderError::Kind::Auth,
                            "no api_key_env configured for endpoint '" +
                                endpoint.model_name + "'");
    }
    const char* value = std::getenv(endpoint.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
        throw ProviderError(ProviderError::Kind::Auth,
                            "environment variable '" + endpoint.api_key_env +
                                "' is not set");
    }
    return value;
}

std::string chat_complete(ChatProvider& provider, const std::string& prompt,
                          double temperature, const std::vector<std::string>& images) {
    if (prompt.empty()) {
        throw std::invalid_argument("chat_complete: empty prompt");
    }
    if (temperature < 0.0) {
        throw std::invalid_argument("chat_complete: temperature must be >= 0");
    }
    ChatRequest request;
    request.prompt = prompt;
    request.temperature = temperature;
    request.images = images;
    return provider.complete(request);
}

std::string rephrase_for_t2i(ChatProvider& provider, DatasetKind kind,
                             const std::string& query_text,
                             const std::optional<std::string>& entity_name) {
    const std::string prompt = prompts::build_rephrase_prompt(kind, query_text, entity_name);
    const std::string response = chat_complete(provider, prompt, /*temperature=*/0.0);
    const std::string phrase = trim(response);
    if (phrase.empty()) {
        throw ProviderError(ProviderError::Kind::Fatal,
                            "rephrase_for_t2i: empty response from provider");
    }
    return phrase;
}

T2IInstruction build_t2i_instruction(const std::string& rephrased,
                                     const std::string& source_query_id,
                                     int entity_index) {
    if (rephrased.empty()) {
        throw std::invalid_argument("build_t2i_instruction: empty rephrased query");
    }
    T2IInstruction instruction;
    instruction.text = std::string(prompts::kT2IInstructionPrefix) + rephrased;
    instruction.source_query_id = source_query_id;
    instruction.entity_index = entity_index;
    return instruction;
}

std::vector<GeneratedImage> generate_images(T2IProvider& provider,
                                            const T2IInstruction& instruction, int m,
                                            ImageQuality quality) {
    if (m < 1) throw std::invalid_argument("generate_images: m must be >= 1");
    std::vector<std::string> payloads = provider.generate(instruction.text, m, quality);
    if (static_cast<int>(payloads.size()) < m) {
        throw ProviderError(ProviderError::Kind::Fatal,
                            "generate_images: provider returned " +
                                std::to_string(payloads.size()) + " of " +
                                std::to_string(m) + " images");
    }
    payloads.resize(static_cast<std::size_t>(m));
    std::vector<GeneratedImage> images;
    images.reserve(payloads.size());
    for (std::size_t i = 0; i < payloads.size(); ++i) {
        GeneratedImage img;
        if (payloads[i].empty()) {
            throw ProviderError(ProviderError::Kind::Fatal,
                                "generate_images: empty image payload at index " +
                                    std::to_string(i + 1));
        }
        img.bytes = std::move(payloads[i]);
        img.content_hash = sha256_hex(img.bytes);
        img.instruction = instruction;
        img.generation_index = static_cast<int>(i + 1);
        images.push_back(std::move(img));
    }
    return images;
}

EmbeddingVector DriftGuardEmbedder::check(EmbeddingVector v) {
    std::size_t expected = expected_dim_.load();
    if (expected == 0) {
        expected_dim_.compare_exchange_strong(expected, v.size());
        expected = expected_dim_.load();
    }
    if (v.size() != expected) {
        throw ProviderError(ProviderError::Kind::Fatal,
                            "embedding dimension drift: got " + std::to_string(v.size()) +
                                ", expected " + std::to_string(expected));
    }
    return v;
}

InflightLimiter::InflightLimiter(int max_inflight)
    : available_(max_inflight > 0 ? max_inflight : 1) {}

void InflightLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
}

void InflightLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        ++available_;
    }
    cv_.notify_one();
}

InflightLimiter::Token::Token(InflightLimiter& limiter) : limiter_(limiter) {
    limiter_.acquire();
}

InflightLimiter::Token::~Token() { limiter_.release(); }

} // namespace visret
