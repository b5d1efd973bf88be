#pragma once

#include "visret/corpus.hpp"
#include "visret/embed.hpp"
#include "visret/providers.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace visret {

/// Stable 64-bit key for a (seed, tag) pair; the basis of all mock
/// randomness, so outputs depend only on inputs, never on call order.
std::uint64_t mix_key(std::uint64_t seed, std::string_view tag);

/// Deterministic unit vector drawn from the key.
EmbeddingVector random_unit_vector(std::uint64_t key, std::size_t dim);

/// v + sigma * N(0, I) drawn from the key (no renormalization).
EmbeddingVector add_gaussian_noise(const EmbeddingVector& v, std::uint64_t key, double sigma);

/// Synthetic benchmark whose positive images cluster around a hidden unit
/// direction per query. sigma_text controls how noisily the mock text
/// embedder lands near that direction, sigma_gen how noisily generated
/// images (and the positives themselves) do, sigma_neg the spread of
/// negatives around their own random directions.
struct PlantedBenchmarkSpec {
    std::size_t n_queries = 200;
    std::size_t images_per_entity = 256;
    std::size_t positives_per_entity = 15;
    std::size_t dim = 64;
    double sigma_text = 0.35;
    double sigma_gen = 0.0875;
    double sigma_neg = 0.1;
    std::uint64_t seed = 7;
};

/// Everything the mock providers need to reproduce a planted benchmark's
/// embedding geometry at run time. Serializable so the CLI can reload it.
struct PlantedFixtures {
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    double sigma_text = 0.0;
    double sigma_gen = 0.0;
    std::map<std::string, std::string> query_text_to_id; // exact query text -> query_id
    std::map<std::string, std::string> rephrase_to_id;   // rephrased phrase -> query_id

    EmbeddingVector direction_for(const std::string& query_id) const;
};

void write_planted_fixtures(const std::filesystem::path& path, const PlantedFixtures& f);
PlantedFixtures read_planted_fixtures(const std::filesystem::path& path);

struct ChatRule {
    enum class Match { Exact, Substring };
    Match match = Match::Exact;
    std::string pattern;
    std::string response;
};

struct PlantedBenchmark {
    Benchmark benchmark;
    std::vector<EmbeddingEntry> corpus_embeddings;
    PlantedFixtures fixtures;
    std::vector<ChatRule> chat_rules; // rephrase fixtures for the mock chat
};

/// Pure function of the spec: same spec, same bytes.
PlantedBenchmark generate_planted_benchmark(const PlantedBenchmarkSpec& spec);

/// Rebuilds the rephrase, reader and judge chat rules for reloaded fixtures.
std::vector<ChatRule> planted_chat_rules(const PlantedFixtures& fixtures);

/// Gold answer the planted reader fixture produces for a query.
std::string planted_gold_answer(const std::string& query_id);

/// Chat provider answering from a fixture table; errors on a miss.
class MockChatProvider : public ChatProvider {
public:
    explicit MockChatProvider(std::vector<ChatRule> rules = {});

    void add_exact(std::string pattern, std::string response);
    void add_substring(std::string pattern, std::string response);

    std::string complete(const ChatRequest& request) override;
    const std::string& model_name() const override { return model_; }
    std::size_t calls() const { return calls_.load(); }

private:
    std::vector<ChatRule> rules_;
    std::string model_ = "mock-chat";
    std::atomic<std::size_t> calls_{0};
};

/// Deterministic embedder. Without fixtures every input hashes to a unit
/// vector. With fixtures, planted query texts and mock image payloads map
/// to their query's direction plus the configured noise.
class MockEmbeddingProvider : public EmbeddingProvider {
public:
    MockEmbeddingProvider(std::size_t dim, std::uint64_t seed,
                          std::shared_ptr<const PlantedFixtures> fixtures = nullptr);

    EmbeddingVector embed_text(const std::string& text) override;
    EmbeddingVector embed_image(const std::string& image_bytes) override;
    const std::string& model_name() const override { return model_; }
    std::size_t calls() const { return calls_.load(); }

private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::shared_ptr<const PlantedFixtures> fixtures_;
    std::string model_ = "mock-embedding";
    std::atomic<std::size_t> calls_{0};
};

/// Deterministic T2I mock emitting tagged payloads (not pixels) that the
/// paired MockEmbeddingProvider understands.
class MockT2IProvider : public T2IProvider {
public:
    explicit MockT2IProvider(std::uint64_t seed,
                             std::shared_ptr<const PlantedFixtures> fixtures = nullptr);

    std::vector<std::string> generate(const std::string& instruction_text, int m,
                                      ImageQuality quality) override;
    const std::string& model_name() const override { return model_; }
    std::size_t calls() const { return calls_.load(); }

private:
    std::uint64_t seed_;
    std::shared_ptr<const PlantedFixtures> fixtures_;
    std::string model_ = "mock-t2i";
    std::atomic<std::size_t> calls_{0};
};

} // namespace visret
