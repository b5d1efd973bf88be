#include "visret/testkit.hpp"

#include "visret/prompts.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace visret {

using nlohmann::json;

namespace {

constexpr char kPayloadSep = '\x1f';
constexpr std::string_view kPayloadPrefix = "mockimg";

std::string mock_image_payload(const std::string& key, int generation_index) {
    std::string payload(kPayloadPrefix);
    payload += kPayloadSep;
    payload += key;
    payload += kPayloadSep;
    payload += std::to_string(generation_index);
    return payload;
}

// mockimg \x1f key \x1f index
bool parse_mock_payload(const std::string& payload, std::string& key, int& index) {
    if (payload.rfind(kPayloadPrefix, 0) != 0) return false;
    const std::size_t first = payload.find(kPayloadSep);
    if (first == std::string::npos) return false;
    const std::size_t second = payload.find(kPayloadSep, first + 1);
    if (second == std::string::npos) return false;
    key = payload.substr(first + 1, second - first - 1);
    try {
        index = std::stoi(payload.substr(second + 1));
    } catch (const std::exception&) {
        return false;
    }
    return true;
}

std::string zero_padded(std::size_t i) {
    std::ostringstream out;
    out.width(5);
    out.fill('0');
    out << i;
    return out.str();
}

} // namespace

std::uint64_t mix_key(std::uint64_t seed, std::string_view tag) {
    // FNV-1a over the tag, folded with the seed, then splitmix64 finalize.
    std::uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

EmbeddingVector random_unit_vector(std::uint64_t key, std::size_t dim) {
    std::mt19937_64 rng(key);
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbeddingVector v(dim);
    for (auto& x : v) x = static_cast<float>(gauss(rng));
    return l2_normalize(v);
}

EmbeddingVector add_gaussian_noise(const EmbeddingVector& v, std::uint64_t key,
                                   double sigma) {
    std::mt19937_64 rng(key);
    std::normal_distribution<double> gauss(0.0, sigma);
    EmbeddingVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(v[i] + gauss(rng));
    }
    return out;
}

EmbeddingVector PlantedFixtures::direction_for(const std::string& query_id) const {
    return random_unit_vector(mix_key(seed, "dir:" + query_id), dim);
}

void write_planted_fixtures(const std::filesystem::path& path, const PlantedFixtures& f) {
    json j;
    j["dim"] = f.dim;
    j["seed"] = f.seed;
    j["sigma_text"] = f.sigma_text;
    j["sigma_gen"] = f.sigma_gen;
    j["query_text_to_id"] = f.query_text_to_id;
    j["rephrase_to_id"] = f.rephrase_to_id;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_planted_fixtures: cannot open " + path.string());
    out << j.dump(2) << '\n';
}

PlantedFixtures read_planted_fixtures(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_planted_fixtures: cannot open " + path.string());
    json j;
    in >> j;
    PlantedFixtures f;
    f.dim = j.at("dim").get<std::size_t>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.sigma_text = j.at("sigma_text").get<double>();
    f.sigma_gen = j.at("sigma_gen").get<double>();
    f.query_text_to_id = j.at("query_text_to_id").get<std::map<std::string, std::string>>();
    f.rephrase_to_id = j.at("rephrase_to_id").get<std::map<std::string, std::string>>();
    return f;
}

std::string planted_gold_answer(const std::string& query_id) {
    return "the planted feature of " + query_id;
}

std::vector<ChatRule> planted_chat_rules(const PlantedFixtures& fixtures) {
    std::vector<ChatRule> rules;
    for (const auto& [rephrased, qid] : fixtures.rephrase_to_id) {
        for (const auto& [text, text_qid] : fixtures.query_text_to_id) {
            if (text_qid != qid) continue;
            rules.push_back({ChatRule::Match::Exact,
                             prompts::build_rephrase_prompt(DatasetKind::SingleEntityVQA,
                                                            text, std::nullopt),
                             rephrased});

            // reader and judge fixtures so the RAG-VQA path runs offline
            const std::string answer = planted_gold_answer(qid);
            std::string reader_prompt =
                std::string(prompts::vqa_system_prompt(DatasetKind::SingleEntityVQA));
            reader_prompt += "\n\nQuestion: " + text;
            rules.push_back({ChatRule::Match::Exact, reader_prompt,
                             "### Reasoning: Synthetic description of " + qid +
                                 ".\n### Answer: " + answer});
            rules.push_back({ChatRule::Match::Exact,
                             prompts::build_judge_prompt(text, answer, answer),
                             "Score: 1"});
        }
    }
    return rules;
}

PlantedBenchmark generate_planted_benchmark(const PlantedBenchmarkSpec& spec) {
    if (spec.n_queries == 0) {
        throw std::invalid_argument("planted spec: n_queries must be >= 1");
    }
    if (spec.positives_per_entity == 0 ||
        spec.positives_per_entity >= spec.images_per_entity) {
        throw std::invalid_argument(
            "planted spec: need 0 < positives_per_entity < images_per_entity");
    }
    if (spec.dim < 2) throw std::invalid_argument("planted spec: dim must be >= 2");
    if (spec.sigma_text <= 0.0 || spec.sigma_gen <= 0.0 || spec.sigma_neg <= 0.0) {
        throw std::invalid_argument("planted spec: sigmas must be > 0");
    }

    PlantedBenchmark out;
    out.benchmark.name = "planted";
    out.fixtures.dim = spec.dim;
    out.fixtures.seed = spec.seed;
    out.fixtures.sigma_text = spec.sigma_text;
    out.fixtures.sigma_gen = spec.sigma_gen;

    for (std::size_t qi = 0; qi < spec.n_queries; ++qi) {
        const std::string qid = "planted-" + zero_padded(qi);
        const EmbeddingVector direction =
            random_unit_vector(mix_key(spec.seed, "dir:" + qid), spec.dim);

        QueryRecord query;
        query.query_id = qid;
        query.text = "What distinctive visual feature does specimen " + qid + " exhibit?";
        query.dataset_kind = DatasetKind::SingleEntityVQA;
        query.gold_answer = planted_gold_answer(qid);

        EntitySlot slot;
        slot.entity_name = "Planted specimen " + zero_padded(qi);
        for (std::size_t j = 0; j < spec.images_per_entity; ++j) {
            const bool positive = j < spec.positives_per_entity;
            ImageRecord img;
            img.image_id = qid + "-img-" + zero_padded(j);
            img.uri = "planted://" + img.image_id;
            img.relevance = positive ? 1 : 0;
            slot.images.push_back(img);

            EmbeddingVector vec;
            if (positive) {
                vec = add_gaussian_noise(
                    direction, mix_key(spec.seed, "pos:" + qid + ":" + std::to_string(j)),
                    spec.sigma_gen);
            } else {
                const EmbeddingVector base = random_unit_vector(
                    mix_key(spec.seed, "negdir:" + qid + ":" + std::to_string(j)), spec.dim);
                vec = add_gaussian_noise(
                    base, mix_key(spec.seed, "neg:" + qid + ":" + std::to_string(j)),
                    spec.sigma_neg);
            }
            out.corpus_embeddings.push_back({img.image_id, l2_normalize(vec)});
        }
        const std::string rephrased = "specimen " + qid;
        out.fixtures.query_text_to_id[query.text] = qid;
        out.fixtures.rephrase_to_id[rephrased] = qid;

        query.entities.push_back(std::move(slot));
        out.benchmark.queries.push_back(std::move(query));
    }

    out.chat_rules = planted_chat_rules(out.fixtures);
    return out;
}

MockChatProvider::MockChatProvider(std::vector<ChatRule> rules) : rules_(std::move(rules)) {}

void MockChatProvider::add_exact(std::string pattern, std::string response) {
    rules_.push_back({ChatRule::Match::Exact, std::move(pattern), std::move(response)});
}

void MockChatProvider::add_substring(std::string pattern, std::string response) {
    rules_.push_back({ChatRule::Match::Substring, std::move(pattern), std::move(response)});
}

std::string MockChatProvider::complete(const ChatRequest& request) {
    calls_.fetch_add(1);
    for (const auto& rule : rules_) {
        const bool hit = rule.match == ChatRule::Match::Exact
                             ? request.prompt == rule.pattern
                             : request.prompt.find(rule.pattern) != std::string::npos;
        if (hit) return rule.response;
    }
    throw ProviderError(ProviderError::Kind::Fatal,
                        "mock_chat: no fixture matches prompt (" +
                            std::to_string(request.prompt.size()) + " bytes)");
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dim, std::uint64_t seed,
                                             std::shared_ptr<const PlantedFixtures> fixtures)
    : dim_(dim), seed_(seed), fixtures_(std::move(fixtures)) {
    if (fixtures_ && fixtures_->dim != dim_) {
        throw std::invalid_argument("mock_embedder: dim disagrees with fixtures");
    }
}

EmbeddingVector MockEmbeddingProvider::embed_text(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("embed_text: empty input");
    calls_.fetch_add(1);
    if (fixtures_) {
        if (auto it = fixtures_->query_text_to_id.find(text);
            it != fixtures_->query_text_to_id.end()) {
            const auto& qid = it->second;
            return l2_normalize(add_gaussian_noise(fixtures_->direction_for(qid),
                                                   mix_key(fixtures_->seed, "text:" + qid),
                                                   fixtures_->sigma_text));
        }
        if (auto it = fixtures_->rephrase_to_id.find(text);
            it != fixtures_->rephrase_to_id.end()) {
            const auto& qid = it->second;
            return l2_normalize(add_gaussian_noise(fixtures_->direction_for(qid),
                                                   mix_key(fixtures_->seed, "rephrase:" + qid),
                                                   fixtures_->sigma_text));
        }
    }
    return random_unit_vector(mix_key(seed_, "t:" + text), dim_);
}

EmbeddingVector MockEmbeddingProvider::embed_image(const std::string& image_bytes) {
    if (image_bytes.empty()) throw std::invalid_argument("embed_image: empty input");
    calls_.fetch_add(1);
    std::string key;
    int index = 0;
    if (fixtures_ && parse_mock_payload(image_bytes, key, index)) {
        // The paired mock T2I plants the direction key in the payload.
        return l2_normalize(add_gaussian_noise(
            fixtures_->direction_for(key),
            mix_key(fixtures_->seed, "gen:" + key + ":" + std::to_string(index)),
            fixtures_->sigma_gen));
    }
    return random_unit_vector(mix_key(seed_, "i:" + image_bytes), dim_);
}

MockT2IProvider::MockT2IProvider(std::uint64_t seed,
                                 std::shared_ptr<const PlantedFixtures> fixtures)
    : seed_(seed), fixtures_(std::move(fixtures)) {}

std::vector<std::string> MockT2IProvider::generate(const std::string& instruction_text,
                                                   int m, ImageQuality) {
    if (m < 1) throw std::invalid_argument("mock_t2i: m must be >= 1");
    calls_.fetch_add(1);

    // A planted instruction is the fixed prefix plus a known rephrase;
    // anything else degrades to an instruction-hash key.
    std::string key;
    if (fixtures_ &&
        instruction_text.rfind(prompts::kT2IInstructionPrefix, 0) == 0) {
        const std::string body =
            instruction_text.substr(prompts::kT2IInstructionPrefix.size());
        if (auto it = fixtures_->rephrase_to_id.find(body);
            it != fixtures_->rephrase_to_id.end()) {
            key = it->second;
        }
    }
    if (key.empty()) {
        key = "instr-" + std::to_string(mix_key(seed_, instruction_text));
    }

    std::vector<std::string> payloads;
    payloads.reserve(static_cast<std::size_t>(m));
    for (int j = 1; j <= m; ++j) {
        payloads.push_back(mock_image_payload(key, j));
    }
    return payloads;
}

} // namespace visret
