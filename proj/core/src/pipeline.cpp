#include "visret/pipeline.hpp"

#include "visret/digest.hpp"
#include "visret/prompts.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace visret {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

void check_indexes(const QueryRecord& query, const std::vector<const VectorIndex*>& indexes) {
    if (indexes.size() != query.entities.size()) {
        throw std::invalid_argument("retrieve: expected " +
                                    std::to_string(query.entities.size()) +
                                    " indexes, got " + std::to_string(indexes.size()));
    }
    for (const auto* idx : indexes) {
        if (idx == nullptr) throw std::invalid_argument("retrieve: missing index");
    }
}

RankedList full_search(const VectorIndex& index, const EmbeddingVector& query_vec,
                       const RetrievalStrategy& strategy, const QueryRecord& query,
                       int entity_index) {
    RankedList list = index.search_top_k(query_vec, index.size());
    list.strategy = strategy.label();
    list.query_id = query.query_id;
    list.entity_index = entity_index;
    return list;
}

std::optional<std::string> entity_of_interest(const QueryRecord& query, std::size_t e) {
    if (query.dataset_kind == DatasetKind::MultiEntityVQA) {
        return query.entities[e].entity_name;
    }
    return std::nullopt;
}

} // namespace

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::OriginalQuery: return "original_query";
        case StrategyKind::QueryExpansion: return "query_expansion";
        case StrategyKind::VisRet: return "visret";
    }
    throw std::logic_error("unknown StrategyKind");
}

StrategyKind strategy_kind_from_string(const std::string& s) {
    if (s == "original_query" || s == "original") return StrategyKind::OriginalQuery;
    if (s == "query_expansion" || s == "expansion") return StrategyKind::QueryExpansion;
    if (s == "visret") return StrategyKind::VisRet;
    throw std::runtime_error("unknown strategy '" + s + "'");
}

RetrievalOutcome retrieve_text_query(const RetrievalStrategy& strategy,
                                     const QueryRecord& query,
                                     const std::vector<const VectorIndex*>& indexes,
                                     const PipelineProviders& providers) {
    if (strategy.kind != StrategyKind::OriginalQuery &&
        strategy.kind != StrategyKind::QueryExpansion) {
        throw std::invalid_argument("retrieve_text_query: wrong strategy kind");
    }
    check_indexes(query, indexes);
    if (providers.embedder == nullptr) {
        throw std::invalid_argument("retrieve_text_query: no embedding provider");
    }
    if (strategy.kind == StrategyKind::QueryExpansion && providers.chat == nullptr) {
        throw std::invalid_argument("retrieve_text_query: query expansion needs a chat provider");
    }

    RetrievalOutcome outcome;
    std::optional<EmbeddingVector> original_vec; // shared across slots
    for (std::size_t e = 0; e < query.entities.size(); ++e) {
        EmbeddingVector vec;
        if (strategy.kind == StrategyKind::OriginalQuery) {
            if (!original_vec) {
                original_vec = l2_normalize(providers.embedder->embed_text(query.text));
            }
            vec = *original_vec;
        } else {
            const std::string rephrased = rephrase_for_t2i(
                *providers.chat, query.dataset_kind, query.text, entity_of_interest(query, e));
            vec = l2_normalize(providers.embedder->embed_text(rephrased));
        }
        outcome.per_entity.push_back(
            full_search(*indexes[e], vec, strategy, query, static_cast<int>(e)));
    }
    return outcome;
}

RetrievalOutcome retrieve_visret(const RetrievalStrategy& strategy, const QueryRecord& query,
                                 const std::vector<const VectorIndex*>& indexes,
                                 const PipelineProviders& providers) {
    if (strategy.kind != StrategyKind::VisRet) {
        throw std::invalid_argument("retrieve_visret: wrong strategy kind");
    }
    if (strategy.m < 1) throw std::invalid_argument("retrieve_visret: m must be >= 1");
    check_indexes(query, indexes);
    if (providers.chat == nullptr || providers.t2i == nullptr ||
        providers.embedder == nullptr) {
        throw std::invalid_argument("retrieve_visret: chat, t2i and embedding providers required");
    }

    RetrievalOutcome outcome;
    for (std::size_t e = 0; e < query.entities.size(); ++e) {
        const std::string rephrased = rephrase_for_t2i(
            *providers.chat, query.dataset_kind, query.text, entity_of_interest(query, e));
        const T2IInstruction instruction =
            build_t2i_instruction(rephrased, query.query_id, static_cast<int>(e));

        std::vector<GeneratedImage> images;
        try {
            images = generate_images(*providers.t2i, instruction, strategy.m, strategy.quality);
        } catch (const ProviderError&) {
            if (!strategy.allow_partial) throw;
            // Retry accepting whatever the provider can produce.
            std::vector<std::string> payloads =
                providers.t2i->generate(instruction.text, strategy.m, strategy.quality);
            if (payloads.empty()) throw;
            for (std::size_t i = 0; i < payloads.size(); ++i) {
                GeneratedImage img;
                img.bytes = std::move(payloads[i]);
                img.content_hash = sha256_hex(img.bytes);
                img.instruction = instruction;
                img.generation_index = static_cast<int>(i + 1);
                images.push_back(std::move(img));
            }
        }

        std::vector<RankedList> lists;
        lists.reserve(images.size());
        for (const auto& img : images) {
            const EmbeddingVector vec = l2_normalize(providers.embedder->embed_image(img.bytes));
            lists.push_back(full_search(*indexes[e], vec, strategy, query, static_cast<int>(e)));
        }
        RankedList fused = rrf_fuse(lists, strategy.fusion);
        fused.strategy = strategy.label();
        fused.query_id = query.query_id;
        fused.entity_index = static_cast<int>(e);
        outcome.per_entity.push_back(std::move(fused));

        outcome.instructions.push_back(instruction);
        for (auto& img : images) outcome.generated.push_back(std::move(img));
    }
    return outcome;
}

RetrievalOutcome run_strategy(const RetrievalStrategy& strategy, const QueryRecord& query,
                              const std::vector<const VectorIndex*>& indexes,
                              const PipelineProviders& providers) {
    if (strategy.kind == StrategyKind::VisRet) {
        return retrieve_visret(strategy, query, indexes, providers);
    }
    return retrieve_text_query(strategy, query, indexes, providers);
}

std::string read_uri_bytes(const std::string& uri) {
    std::string path = uri;
    if (path.rfind("file://", 0) == 0) path = path.substr(7);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot resolve uri '" + uri + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<ContextImage> compose_context(const RetrievalOutcome& outcome,
                                          const QueryRecord& query, int budget,
                                          bool use_generated_as_context,
                                          const UriResolver& resolver,
                                          std::vector<std::string>* warnings) {
    if (budget < 1) throw std::invalid_argument("compose_context: budget must be >= 1");
    const std::size_t n_entities = query.entities.size();

    if (use_generated_as_context) {
        if (outcome.generated.empty()) {
            throw std::invalid_argument(
                "compose_context: generated-as-context requested but no generated images");
        }
        // One generated image per entity slot, the first generation each.
        std::vector<ContextImage> context;
        for (std::size_t e = 0; e < n_entities; ++e) {
            const GeneratedImage* best = nullptr;
            for (const auto& img : outcome.generated) {
                if (img.instruction.entity_index != static_cast<int>(e)) continue;
                if (best == nullptr || img.generation_index < best->generation_index) {
                    best = &img;
                }
            }
            if (best == nullptr) {
                throw std::runtime_error("compose_context: no generated image for entity " +
                                         std::to_string(e));
            }
            context.push_back({best->bytes, query.entities[e].entity_name});
        }
        return context;
    }

    if (outcome.per_entity.size() != n_entities) {
        throw std::invalid_argument("compose_context: outcome/query entity count mismatch");
    }
    if (budget < static_cast<int>(n_entities) && warnings) {
        warnings->push_back("context budget " + std::to_string(budget) + " is below the " +
                            std::to_string(n_entities) + " entity slots; later slots get 0");
    }

    std::vector<ContextImage> context;
    const std::size_t base = static_cast<std::size_t>(budget) / n_entities;
    const std::size_t remainder = static_cast<std::size_t>(budget) % n_entities;
    for (std::size_t e = 0; e < n_entities; ++e) {
        const std::size_t quota = base + (e < remainder ? 1 : 0);
        std::unordered_map<std::string, std::string> uri_of;
        for (const auto& img : query.entities[e].images) {
            uri_of.emplace(img.image_id, img.uri);
        }
        const auto& items = outcome.per_entity[e].items;
        for (std::size_t i = 0; i < items.size() && i < quota; ++i) {
            auto it = uri_of.find(items[i].image_id);
            if (it == uri_of.end()) {
                throw std::runtime_error("compose_context: ranked id '" + items[i].image_id +
                                         "' not present in entity slot " + std::to_string(e));
            }
            context.push_back({resolver(it->second), query.entities[e].entity_name});
        }
    }
    return context;
}

VqaAnswer answer_vqa(ChatProvider& reader, const QueryRecord& query,
                     const std::vector<ContextImage>& context) {
    std::string prompt = std::string(prompts::vqa_system_prompt(query.dataset_kind));
    prompt += "\n\nQuestion: " + query.text;

    ChatRequest request;
    request.prompt = prompt;
    request.temperature = 0.0;
    for (const auto& img : context) request.images.push_back(img.bytes);

    VqaAnswer result;
    result.raw_response = reader.complete(request);
    const auto marker = result.raw_response.find(prompts::kAnswerMarker);
    if (marker == std::string::npos) {
        result.marker_found = false;
        result.answer = trim(result.raw_response);
    } else {
        result.answer = trim(result.raw_response.substr(marker + prompts::kAnswerMarker.size()));
    }
    return result;
}

std::vector<OutcomeRecord> outcome_records(const RetrievalOutcome& outcome,
                                           const QueryRecord& query) {
    std::vector<OutcomeRecord> records;
    for (std::size_t e = 0; e < outcome.per_entity.size(); ++e) {
        OutcomeRecord rec;
        rec.query_id = query.query_id;
        rec.entity_index = static_cast<int>(e);
        rec.strategy = outcome.per_entity[e].strategy;
        for (const auto& instr : outcome.instructions) {
            if (instr.entity_index == static_cast<int>(e)) rec.instruction = instr.text;
        }
        for (const auto& img : outcome.generated) {
            if (img.instruction.entity_index == static_cast<int>(e)) {
                rec.generated_hashes.push_back(img.content_hash);
            }
        }
        rec.ranking = outcome.per_entity[e];
        records.push_back(std::move(rec));
    }
    return records;
}

void write_outcomes_jsonl(const std::filesystem::path& path,
                          const std::vector<OutcomeRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_outcomes_jsonl: cannot open " + path.string());
    for (const auto& rec : records) {
        json j;
        j["query_id"] = rec.query_id;
        j["entity_index"] = rec.entity_index;
        j["strategy"] = rec.strategy;
        j["instruction"] = rec.instruction ? json(*rec.instruction) : json(nullptr);
        j["generated_hashes"] = rec.generated_hashes;
        json ranking = json::array();
        for (const auto& item : rec.ranking.items) {
            ranking.push_back(json::array({item.image_id, item.score}));
        }
        j["ranking"] = ranking;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write_outcomes_jsonl: write failed on " + path.string());
}

std::vector<OutcomeRecord> read_outcomes_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_outcomes_jsonl: cannot open " + path.string());
    std::vector<OutcomeRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            OutcomeRecord rec;
            rec.query_id = j.at("query_id").get<std::string>();
            rec.entity_index = j.at("entity_index").get<int>();
            rec.strategy = j.at("strategy").get<std::string>();
            if (j.contains("instruction") && !j.at("instruction").is_null()) {
                rec.instruction = j.at("instruction").get<std::string>();
            }
            if (j.contains("generated_hashes")) {
                rec.generated_hashes = j.at("generated_hashes").get<std::vector<std::string>>();
            }
            rec.ranking.query_id = rec.query_id;
            rec.ranking.entity_index = rec.entity_index;
            rec.ranking.strategy = rec.strategy;
            for (const auto& item : j.at("ranking")) {
                rec.ranking.items.push_back(
                    {item.at(0).get<std::string>(), item.at(1).get<double>()});
            }
            records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw std::runtime_error("read_outcomes_jsonl: line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
    }
    return records;
}

} // namespace visret
