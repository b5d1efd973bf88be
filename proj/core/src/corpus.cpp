#include "visret/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace visret {

using nlohmann::json;

namespace {

const std::set<std::string> kKnownQueryKeys = {
    "query_id", "text", "dataset_kind", "gold_answer", "entities"};

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
    throw BenchmarkParseError("line " + std::to_string(line_no) + ": " + what);
}

QueryRecord parse_query(const json& j, std::size_t line_no,
                        std::vector<std::string>* warnings) {
    if (!j.is_object()) line_error(line_no, "expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!kKnownQueryKeys.count(key) && warnings) {
            warnings->push_back("line " + std::to_string(line_no) +
                                ": ignoring unknown key '" + key + "'");
        }
    }
    for (const char* required : {"query_id", "text", "dataset_kind", "entities"}) {
        if (!j.contains(required)) {
            line_error(line_no, std::string("missing \"") + required + "\"");
        }
    }

    QueryRecord q;
    try {
        q.query_id = j.at("query_id").get<std::string>();
        q.text = j.at("text").get<std::string>();
        q.dataset_kind = dataset_kind_from_string(j.at("dataset_kind").get<std::string>());
        if (j.contains("gold_answer") && !j.at("gold_answer").is_null()) {
            q.gold_answer = j.at("gold_answer").get<std::string>();
        }
        for (const auto& je : j.at("entities")) {
            EntitySlot slot;
            slot.entity_name = je.at("entity_name").get<std::string>();
            for (const auto& ji : je.at("images")) {
                ImageRecord img;
                img.image_id = ji.at("image_id").get<std::string>();
                img.uri = ji.at("uri").get<std::string>();
                img.relevance = ji.at("relevance").get<int>();
                if (img.relevance != 0 && img.relevance != 1) {
                    line_error(line_no, "relevance must be 0 or 1 for image '" +
                                            img.image_id + "'");
                }
                slot.images.push_back(std::move(img));
            }
            if (slot.images.empty()) {
                line_error(line_no, "entity '" + slot.entity_name + "' has no images");
            }
            q.entities.push_back(std::move(slot));
        }
    } catch (const json::exception& e) {
        line_error(line_no, std::string("schema error: ") + e.what());
    }

    if (q.text.empty()) line_error(line_no, "empty query text");
    if (q.entities.empty()) line_error(line_no, "query has no entities");
    const bool multi = q.entities.size() >= 2;
    if (multi != (q.dataset_kind == DatasetKind::MultiEntityVQA)) {
        line_error(line_no, "dataset_kind '" + to_string(q.dataset_kind) +
                                "' inconsistent with " +
                                std::to_string(q.entities.size()) + " entity slot(s)");
    }
    return q;
}

} // namespace

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::SingleEntityVQA: return "single_entity_vqa";
        case DatasetKind::MultiEntityVQA: return "multi_entity_vqa";
        case DatasetKind::CaptionRetrieval: return "caption_retrieval";
    }
    throw std::logic_error("unknown DatasetKind");
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "single_entity_vqa") return DatasetKind::SingleEntityVQA;
    if (s == "multi_entity_vqa") return DatasetKind::MultiEntityVQA;
    if (s == "caption_retrieval") return DatasetKind::CaptionRetrieval;
    throw std::runtime_error("unknown dataset_kind '" + s + "'");
}

Benchmark load_benchmark(const std::filesystem::path& path,
                         std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_benchmark: cannot open " + path.string());

    Benchmark b;
    b.name = path.stem().string();
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            line_error(line_no, std::string("malformed JSON: ") + e.what());
        }
        QueryRecord q = parse_query(j, line_no, warnings);
        if (!seen_ids.insert(q.query_id).second) {
            line_error(line_no, "duplicate query_id '" + q.query_id + "'");
        }
        b.queries.push_back(std::move(q));
    }
    if (in.bad()) throw std::runtime_error("load_benchmark: read failure on " + path.string());
    return b;
}

std::string to_jsonl_line(const QueryRecord& q) {
    json j;
    j["query_id"] = q.query_id;
    j["text"] = q.text;
    j["dataset_kind"] = to_string(q.dataset_kind);
    j["gold_answer"] = q.gold_answer ? json(*q.gold_answer) : json(nullptr);
    json entities = json::array();
    for (const auto& slot : q.entities) {
        json images = json::array();
        for (const auto& img : slot.images) {
            images.push_back({{"image_id", img.image_id},
                              {"uri", img.uri},
                              {"relevance", img.relevance}});
        }
        entities.push_back({{"entity_name", slot.entity_name}, {"images", images}});
    }
    j["entities"] = entities;
    return j.dump();
}

void save_benchmark(const Benchmark& b, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_benchmark: cannot open " + path.string());
    for (const auto& q : b.queries) {
        out << to_jsonl_line(q) << '\n';
    }
    if (!out) throw std::runtime_error("save_benchmark: write failed on " + path.string());
}

bool ValidationReport::has_errors() const { return error_count() > 0; }

std::size_t ValidationReport::error_count() const {
    return static_cast<std::size_t>(
        std::count_if(issues.begin(), issues.end(), [](const ValidationIssue& i) {
            return i.severity == ValidationIssue::Severity::Error;
        }));
}

std::size_t ValidationReport::warning_count() const {
    return issues.size() - error_count();
}

ValidationReport validate_benchmark(const Benchmark& b, bool check_uris) {
    ValidationReport report;
    for (const auto& q : b.queries) {
        for (std::size_t e = 0; e < q.entities.size(); ++e) {
            const auto& slot = q.entities[e];
            std::size_t positives = 0;
            std::unordered_set<std::string> ids;
            for (const auto& img : slot.images) {
                if (img.relevance == 1) ++positives;
                if (!ids.insert(img.image_id).second) {
                    report.issues.push_back({ValidationIssue::Severity::Error, q.query_id,
                                             "duplicate image_id '" + img.image_id +
                                                 "' in entity '" + slot.entity_name + "'"});
                }
                if (check_uris && !img.uri.empty() &&
                    img.uri.find("://") == std::string::npos &&
                    !std::filesystem::exists(img.uri)) {
                    report.issues.push_back({ValidationIssue::Severity::Warning, q.query_id,
                                             "unreachable uri '" + img.uri + "'"});
                }
            }
            if (positives == 0) {
                report.issues.push_back({ValidationIssue::Severity::Warning, q.query_id,
                                         "query " + q.query_id + " entity '" +
                                             slot.entity_name + "' has no positives"});
            }
        }
    }
    return report;
}

Benchmark filter_hard(const Benchmark& b,
                      const std::map<std::string, RetrieverRankings>& baselines) {
    Benchmark out;
    out.name = b.name;
    for (const auto& q : b.queries) {
        bool solved = false;
        for (const auto& [retriever, rankings] : baselines) {
            for (std::size_t e = 0; e < q.entities.size(); ++e) {
                auto it = rankings.find({q.query_id, static_cast<int>(e)});
                if (it == rankings.end()) {
                    throw std::invalid_argument(
                        "filter_hard: missing ranking for retriever '" + retriever +
                        "', query '" + q.query_id + "', entity " + std::to_string(e));
                }
                const auto& slot = q.entities[e];
                std::unordered_set<std::string> positives;
                for (const auto& img : slot.images) {
                    if (img.relevance == 1) positives.insert(img.image_id);
                }
                // Recall@1 = 1.0 iff the top-1 item is a positive.
                if (!positives.empty() && !it->second.items.empty() &&
                    positives.count(it->second.items.front().image_id)) {
                    solved = true;
                }
            }
        }
        if (!solved) out.queries.push_back(q);
    }
    return out;
}

StatsSummary corpus_stats(const Benchmark& b) {
    StatsSummary s;
    s.n_queries = b.queries.size();
    if (b.queries.empty()) return s;

    std::size_t total_words = 0;
    std::size_t total_slots = 0;
    std::size_t total_images = 0;
    std::size_t total_positives = 0;
    for (const auto& q : b.queries) {
        std::istringstream words(q.text);
        std::string w;
        while (words >> w) ++total_words;
        for (const auto& slot : q.entities) {
            ++total_slots;
            total_images += slot.images.size();
            for (const auto& img : slot.images) {
                if (img.relevance == 1) ++total_positives;
            }
        }
    }
    s.mean_query_words = static_cast<double>(total_words) / s.n_queries;
    if (total_slots > 0) {
        s.mean_images_per_slot = static_cast<double>(total_images) / total_slots;
        s.mean_positives_per_slot = static_cast<double>(total_positives) / total_slots;
    }
    return s;
}

std::string format_stats(const StatsSummary& s, const std::string& name) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << "Dataset: " << name << '\n';
    out << "# Queries                " << s.n_queries << '\n';
    out << "|Query| (word count)     " << s.mean_query_words << '\n';
    out << "# Images (per entity)    " << s.mean_images_per_slot << '\n';
    out << "# Positives (per entity) " << s.mean_positives_per_slot << '\n';
    return out.str();
}

} // namespace visret
