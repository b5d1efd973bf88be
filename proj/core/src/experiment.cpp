#include "visret/experiment.hpp"

#include "visret/digest.hpp"
#include "visret/http_providers.hpp"
#include "visret/prompts.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>
#include <unordered_map>

namespace visret {

using nlohmann::json;

namespace {

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const int thread_count = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (thread_count == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
    return p.is_absolute() ? p : base / p;
}

EndpointConfig endpoint_from_json(const json& j) {
    EndpointConfig e;
    e.kind = j.value("kind", "mock");
    e.base_url = j.value("base_url", "");
    e.model = j.value("model", "");
    e.api_key_env = j.value("api_key_env", "");
    e.timeout_s = j.value("timeout_s", 60.0);
    e.max_retries = j.value("max_retries", 3);
    return e;
}

json endpoint_to_json(const EndpointConfig& e) {
    return {{"kind", e.kind},          {"base_url", e.base_url},
            {"model", e.model},        {"api_key_env", e.api_key_env},
            {"timeout_s", e.timeout_s}, {"max_retries", e.max_retries}};
}

StrategyConfig strategy_from_json(const json& j) {
    StrategyConfig s;
    s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
    s.name = j.value("name", "");
    s.m = j.value("m", 3);
    s.rrf_lambda = j.value("rrf_lambda", 1.0);
    if (j.contains("output_k") && !j.at("output_k").is_null()) {
        s.output_k = j.at("output_k").get<std::size_t>();
    }
    const std::string quality = j.value("quality", "high");
    if (quality != "low" && quality != "high") {
        throw ConfigError("strategy quality must be 'low' or 'high'");
    }
    s.quality = quality == "low" ? ImageQuality::Low : ImageQuality::High;
    s.use_generated_as_context = j.value("use_generated_as_context", false);
    return s;
}

json strategy_to_json(const StrategyConfig& s) {
    json j = {{"kind", to_string(s.kind)},
              {"name", s.name},
              {"m", s.m},
              {"rrf_lambda", s.rrf_lambda},
              {"quality", to_string(s.quality)},
              {"use_generated_as_context", s.use_generated_as_context}};
    j["output_k"] = s.output_k ? json(*s.output_k) : json(nullptr);
    return j;
}

ProviderEndpoint to_endpoint(const EndpointConfig& e, EndpointKind kind) {
    ProviderEndpoint endpoint;
    endpoint.kind = kind;
    endpoint.base_url = e.base_url;
    endpoint.model_name = e.model;
    endpoint.api_key_env = e.api_key_env;
    endpoint.timeout_s = e.timeout_s;
    endpoint.max_retries = e.max_retries;
    return endpoint;
}

struct QueryJob {
    std::size_t strategy_index;
    std::size_t query_index;
};

} // namespace

RetrievalStrategy StrategyConfig::to_strategy(bool allow_partial) const {
    RetrievalStrategy s;
    s.kind = kind;
    s.name = name;
    s.m = m;
    s.fusion.lambda = rrf_lambda;
    s.fusion.output_k = output_k;
    s.quality = quality;
    s.use_generated_as_context = use_generated_as_context;
    s.allow_partial = allow_partial;
    return s;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }

    const std::filesystem::path base = path.parent_path();
    ExperimentConfig c;
    try {
        c.benchmark_path = resolve(base, j.at("benchmark").get<std::string>());
        if (j.contains("embeddings") && !j.at("embeddings").is_null()) {
            c.embeddings_path = resolve(base, j.at("embeddings").get<std::string>());
        }
        if (j.contains("planted_fixtures") && !j.at("planted_fixtures").is_null()) {
            c.planted_fixtures_path =
                resolve(base, j.at("planted_fixtures").get<std::string>());
        }
        if (j.contains("providers")) {
            for (const auto& [role, je] : j.at("providers").items()) {
                c.providers[role] = endpoint_from_json(je);
            }
        }
        for (const auto& js : j.at("strategies")) {
            c.strategies.push_back(strategy_from_json(js));
        }
        if (j.contains("k")) c.k = j.at("k").get<std::vector<std::size_t>>();
        c.cache_dir = resolve(base, j.value("cache_dir", "cache"));
        c.output_dir = resolve(base, j.value("output_dir", "out"));
        c.seed = j.value("seed", 0ull);
        c.workers = j.value("workers", 1);
        c.provider_inflight = j.value("provider_inflight", 4);
        c.embedding_dim = j.value("embedding_dim", 64ull);
        c.failure_budget = j.value("failure_budget", 0.02);
        if (j.contains("vqa")) {
            c.vqa.enabled = j.at("vqa").value("enabled", false);
            c.vqa.context_k = j.at("vqa").value("context_k", 1);
        }
        c.allow_partial = j.value("allow_partial", false);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return c;
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["benchmark"] = c.benchmark_path.string();
    j["embeddings"] = c.embeddings_path ? json(c.embeddings_path->string()) : json(nullptr);
    j["planted_fixtures"] =
        c.planted_fixtures_path ? json(c.planted_fixtures_path->string()) : json(nullptr);
    json providers;
    for (const auto& [role, e] : c.providers) providers[role] = endpoint_to_json(e);
    j["providers"] = providers;
    json strategies = json::array();
    for (const auto& s : c.strategies) strategies.push_back(strategy_to_json(s));
    j["strategies"] = strategies;
    j["k"] = c.k;
    j["cache_dir"] = c.cache_dir.string();
    j["output_dir"] = c.output_dir.string();
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["provider_inflight"] = c.provider_inflight;
    j["embedding_dim"] = c.embedding_dim;
    j["failure_budget"] = c.failure_budget;
    j["vqa"] = {{"enabled", c.vqa.enabled}, {"context_k", c.vqa.context_k}};
    j["allow_partial"] = c.allow_partial;
    return j.dump(2);
}

void validate_config(const ExperimentConfig& c) {
    if (c.benchmark_path.empty()) throw ConfigError("no benchmark path configured");
    if (c.strategies.empty()) throw ConfigError("no strategies configured");
    if (c.k.empty()) throw ConfigError("k values must be nonempty");
    for (std::size_t i = 0; i < c.k.size(); ++i) {
        if (c.k[i] == 0) throw ConfigError("k values must be positive");
        if (i > 0 && c.k[i] <= c.k[i - 1]) {
            throw ConfigError("k values must be strictly ascending");
        }
    }
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    if (c.failure_budget < 0.0 || c.failure_budget > 1.0) {
        throw ConfigError("failure_budget must be in [0, 1]");
    }

    auto require_provider = [&](const std::string& role, const std::string& why) {
        if (!c.providers.count(role)) {
            throw ConfigError("provider '" + role + "' required " + why +
                              " but not declared");
        }
    };
    require_provider("embedding", "for query embedding");
    std::set<std::string> labels;
    for (const auto& s : c.strategies) {
        if (s.m < 1) throw ConfigError("strategy m must be >= 1");
        if (s.rrf_lambda < 0.0) throw ConfigError("rrf_lambda must be >= 0");
        if (s.kind == StrategyKind::QueryExpansion || s.kind == StrategyKind::VisRet) {
            require_provider("chat", "by strategy '" + s.to_strategy(false).label() + "'");
        }
        if (s.kind == StrategyKind::VisRet) {
            require_provider("t2i", "by strategy '" + s.to_strategy(false).label() + "'");
        }
        if (!labels.insert(s.to_strategy(false).label()).second) {
            throw ConfigError("duplicate strategy label '" + s.to_strategy(false).label() +
                              "'; set distinct names");
        }
    }
    if (c.vqa.enabled) {
        require_provider("reader", "for VQA answering");
        require_provider("judge", "for VQA judging");
        // context_k = 0 is knowledge-only mode (no retrieval context)
        if (c.vqa.context_k < 0) throw ConfigError("vqa.context_k must be >= 0");
    }
}

ProviderSet build_providers(const ExperimentConfig& c) {
    ProviderSet set;
    set.cache = std::make_unique<ContentCache>(c.cache_dir);
    set.limiter = std::make_unique<InflightLimiter>(c.provider_inflight);

    if (c.planted_fixtures_path) {
        set.fixtures = std::make_shared<const PlantedFixtures>(
            read_planted_fixtures(*c.planted_fixtures_path));
    }

    auto make_chat = [&](const EndpointConfig& e) -> std::unique_ptr<ChatProvider> {
        if (e.kind == "mock") {
            std::vector<ChatRule> rules;
            if (set.fixtures) rules = planted_chat_rules(*set.fixtures);
            return std::make_unique<MockChatProvider>(std::move(rules));
        }
        if (e.kind == "openai") {
            return std::make_unique<HttpChatProvider>(to_endpoint(e, EndpointKind::Chat),
                                                      RetryPolicy{}, set.limiter.get());
        }
        throw ConfigError("unknown provider kind '" + e.kind + "'");
    };

    auto wrap_chat = [&](std::unique_ptr<ChatProvider> inner) -> ChatProvider* {
        ChatProvider* raw = inner.get();
        set.chat_owned.push_back(std::move(inner));
        auto caching = std::make_unique<CachingChatProvider>(*raw, *set.cache);
        ChatProvider* out = caching.get();
        set.chat_owned.push_back(std::move(caching));
        return out;
    };

    if (auto it = c.providers.find("chat"); it != c.providers.end()) {
        set.pipeline.chat = wrap_chat(make_chat(it->second));
    }
    if (auto it = c.providers.find("reader"); it != c.providers.end()) {
        set.reader = wrap_chat(make_chat(it->second));
    }
    if (auto it = c.providers.find("judge"); it != c.providers.end()) {
        set.judge = wrap_chat(make_chat(it->second));
    }

    if (auto it = c.providers.find("t2i"); it != c.providers.end()) {
        std::unique_ptr<T2IProvider> inner;
        if (it->second.kind == "mock") {
            inner = std::make_unique<MockT2IProvider>(c.seed, set.fixtures);
        } else if (it->second.kind == "openai") {
            inner = std::make_unique<HttpT2IProvider>(
                to_endpoint(it->second, EndpointKind::TextToImage), RetryPolicy{},
                set.limiter.get());
        } else {
            throw ConfigError("unknown provider kind '" + it->second.kind + "'");
        }
        T2IProvider* raw = inner.get();
        set.t2i_owned.push_back(std::move(inner));
        auto caching = std::make_unique<CachingT2IProvider>(*raw, *set.cache);
        set.pipeline.t2i = caching.get();
        set.t2i_owned.push_back(std::move(caching));
    }

    if (auto it = c.providers.find("embedding"); it != c.providers.end()) {
        std::unique_ptr<EmbeddingProvider> inner;
        if (it->second.kind == "mock") {
            const std::size_t dim = set.fixtures ? set.fixtures->dim : c.embedding_dim;
            const std::uint64_t seed = set.fixtures ? set.fixtures->seed : c.seed;
            inner = std::make_unique<MockEmbeddingProvider>(dim, seed, set.fixtures);
        } else if (it->second.kind == "openai") {
            inner = std::make_unique<HttpEmbeddingProvider>(
                to_endpoint(it->second, EndpointKind::Embedding), RetryPolicy{},
                set.limiter.get());
        } else {
            throw ConfigError("unknown provider kind '" + it->second.kind + "'");
        }
        EmbeddingProvider* raw = inner.get();
        set.embed_owned.push_back(std::move(inner));
        auto guarded = std::make_unique<DriftGuardEmbedder>(*raw);
        EmbeddingProvider* guard_ptr = guarded.get();
        set.embed_owned.push_back(std::move(guarded));
        auto caching = std::make_unique<CachingEmbeddingProvider>(*guard_ptr, *set.cache);
        set.pipeline.embedder = caching.get();
        set.embed_owned.push_back(std::move(caching));
    }

    return set;
}

std::unordered_map<std::string, EmbeddingVector> load_corpus_vectors(
    const ExperimentConfig& config, const Benchmark& benchmark,
    EmbeddingProvider* embedder) {
    std::unordered_map<std::string, EmbeddingVector> corpus_vectors;
    if (config.embeddings_path) {
        for (auto& entry : read_embedding_file(*config.embeddings_path)) {
            corpus_vectors.emplace(std::move(entry.image_id), std::move(entry.vector));
        }
        return corpus_vectors;
    }
    if (embedder == nullptr) {
        throw ConfigError("no embeddings file and no embedding provider configured");
    }
    for (const auto& query : benchmark.queries) {
        for (const auto& slot : query.entities) {
            for (const auto& img : slot.images) {
                if (corpus_vectors.count(img.image_id)) continue;
                corpus_vectors.emplace(img.image_id,
                                       embedder->embed_image(read_uri_bytes(img.uri)));
            }
        }
    }
    return corpus_vectors;
}

std::vector<std::vector<VectorIndex>> build_query_indexes(
    const Benchmark& benchmark,
    const std::unordered_map<std::string, EmbeddingVector>& corpus_vectors) {
    std::vector<std::vector<VectorIndex>> indexes(benchmark.queries.size());
    for (std::size_t qi = 0; qi < benchmark.queries.size(); ++qi) {
        const auto& query = benchmark.queries[qi];
        for (const auto& slot : query.entities) {
            std::vector<EmbeddingEntry> entries;
            entries.reserve(slot.images.size());
            for (const auto& img : slot.images) {
                auto it = corpus_vectors.find(img.image_id);
                if (it == corpus_vectors.end()) {
                    throw std::runtime_error("no embedding for image '" + img.image_id + "'");
                }
                entries.push_back({img.image_id, it->second});
            }
            indexes[qi].push_back(VectorIndex::build(entries));
        }
    }
    return indexes;
}

void write_rows_jsonl(const std::filesystem::path& path, const std::vector<MetricRow>& rows,
                      const std::vector<std::size_t>& ks) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_rows_jsonl: cannot open " + path.string());
    for (const auto& row : rows) {
        json j = {{"query_id", row.query_id},
                  {"entity_index", row.entity_index},
                  {"strategy", row.strategy},
                  {"k", ks},
                  {"recall", row.recall},
                  {"ndcg", row.ndcg},
                  {"vqa_score", row.vqa_score ? json(*row.vqa_score) : json(nullptr)},
                  {"zero_positives", row.zero_positives}};
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write_rows_jsonl: write failed on " + path.string());
}

std::vector<MetricRow> read_rows_jsonl(const std::filesystem::path& path,
                                       std::vector<std::size_t>& ks_out) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_rows_jsonl: cannot open " + path.string());
    std::vector<MetricRow> rows;
    ks_out.clear();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            MetricRow row;
            row.query_id = j.at("query_id").get<std::string>();
            row.entity_index = j.at("entity_index").get<int>();
            row.strategy = j.at("strategy").get<std::string>();
            const auto ks = j.at("k").get<std::vector<std::size_t>>();
            if (ks_out.empty()) {
                ks_out = ks;
            } else if (ks != ks_out) {
                throw std::runtime_error("inconsistent k values across rows");
            }
            row.recall = j.at("recall").get<std::vector<double>>();
            row.ndcg = j.at("ndcg").get<std::vector<double>>();
            if (!j.at("vqa_score").is_null()) row.vqa_score = j.at("vqa_score").get<double>();
            row.zero_positives = j.value("zero_positives", false);
            rows.push_back(std::move(row));
        } catch (const json::exception& e) {
            throw std::runtime_error("read_rows_jsonl: line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
    }
    return rows;
}

RunResult run_experiment(const ExperimentConfig& config) {
    validate_config(config);

    std::vector<std::string> load_warnings;
    const Benchmark benchmark = load_benchmark(config.benchmark_path, &load_warnings);
    for (const auto& w : load_warnings) std::cerr << "warning: " << w << '\n';

    const ValidationReport validation = validate_benchmark(benchmark);
    for (const auto& issue : validation.issues) {
        std::cerr << (issue.severity == ValidationIssue::Severity::Error ? "error: "
                                                                         : "warning: ")
                  << issue.message << '\n';
    }
    if (validation.has_errors()) {
        throw ConfigError("benchmark validation failed with " +
                          std::to_string(validation.error_count()) + " error(s)");
    }

    if (config.dry_run) {
        for (const auto& sc : config.strategies) {
            const RetrievalStrategy strategy = sc.to_strategy(config.allow_partial);
            std::cout << "strategy " << strategy.label() << ":\n";
            std::size_t chat_calls = 0;
            std::size_t t2i_calls = 0;
            std::size_t embed_calls = 0;
            for (const auto& query : benchmark.queries) {
                for (std::size_t e = 0; e < query.entities.size(); ++e) {
                    if (strategy.kind != StrategyKind::OriginalQuery) {
                        const auto entity =
                            query.dataset_kind == DatasetKind::MultiEntityVQA
                                ? std::optional<std::string>(query.entities[e].entity_name)
                                : std::nullopt;
                        std::cout << "--- rephrase prompt (" << query.query_id << ", entity "
                                  << e << ") ---\n"
                                  << prompts::build_rephrase_prompt(query.dataset_kind,
                                                                    query.text, entity)
                                  << "\n";
                        ++chat_calls;
                    }
                    if (strategy.kind == StrategyKind::VisRet) {
                        std::cout << "--- planned T2I instruction: \""
                                  << prompts::kT2IInstructionPrefix
                                  << "<rephrased>\" x " << strategy.m << " sample(s)\n";
                        ++t2i_calls;
                        embed_calls += static_cast<std::size_t>(strategy.m);
                    } else {
                        ++embed_calls;
                    }
                }
            }
            std::cout << "planned provider calls: chat=" << chat_calls
                      << " t2i=" << t2i_calls << " embed=" << embed_calls << "\n";
        }
        if (config.vqa.enabled) {
            std::cout << "--- VQA reader prompt (single-entity) ---\n"
                      << prompts::vqa_system_prompt(DatasetKind::SingleEntityVQA) << "\n";
            std::cout << "--- judge template ---\n" << prompts::judge_template() << "\n";
        }
        RunResult dry;
        dry.exit_code = 0;
        return dry;
    }

    ProviderSet providers = build_providers(config);
    std::filesystem::create_directories(config.output_dir);

    const auto corpus_vectors =
        load_corpus_vectors(config, benchmark, providers.pipeline.embedder);
    const auto indexes = build_query_indexes(benchmark, corpus_vectors);

    const std::size_t n_strategies = config.strategies.size();
    const std::size_t n_queries = benchmark.queries.size();
    std::vector<std::vector<MetricRow>> row_slots(n_strategies * n_queries);
    std::vector<std::vector<OutcomeRecord>> outcome_slots(n_strategies * n_queries);
    std::vector<std::optional<std::string>> failure_slots(n_strategies * n_queries);
    std::vector<std::optional<json>> answer_slots(n_strategies * n_queries);

    std::vector<QueryJob> jobs;
    jobs.reserve(n_strategies * n_queries);
    for (std::size_t si = 0; si < n_strategies; ++si) {
        for (std::size_t qi = 0; qi < n_queries; ++qi) jobs.push_back({si, qi});
    }

    parallel_for(jobs.size(), config.workers, [&](std::size_t job_index) {
        const auto [si, qi] = jobs[job_index];
        const auto& query = benchmark.queries[qi];
        const RetrievalStrategy strategy =
            config.strategies[si].to_strategy(config.allow_partial);
        const std::size_t slot = si * n_queries + qi;
        try {
            std::vector<const VectorIndex*> query_indexes;
            for (const auto& idx : indexes[qi]) query_indexes.push_back(&idx);

            const RetrievalOutcome outcome =
                run_strategy(strategy, query, query_indexes, providers.pipeline);
            outcome_slots[slot] = outcome_records(outcome, query);

            std::optional<double> vqa_score;
            if (config.vqa.enabled && query.gold_answer) {
                const std::vector<ContextImage> context =
                    config.vqa.context_k == 0
                        ? std::vector<ContextImage>{}
                        : compose_context(outcome, query, config.vqa.context_k,
                                          strategy.use_generated_as_context);
                const VqaAnswer answer = answer_vqa(*providers.reader, query, context);
                const JudgeVerdict verdict = judge_answer(
                    *providers.judge, query.text, *query.gold_answer, answer.answer);
                vqa_score = verdict.score;
                answer_slots[slot] = json{
                    {"query_id", query.query_id},
                    {"strategy", strategy.label()},
                    {"answer", answer.answer},
                    {"marker_found", answer.marker_found},
                    {"score", verdict.score},
                    {"hallucination", verdict.hallucination},
                    {"redundant", verdict.redundant},
                    {"explanation",
                     verdict.explanation ? json(*verdict.explanation) : json(nullptr)}};
            }

            for (std::size_t e = 0; e < query.entities.size(); ++e) {
                MetricRow row;
                row.query_id = query.query_id;
                row.entity_index = static_cast<int>(e);
                row.strategy = strategy.label();
                const RelevanceJudgments judgments = judgments_from_slot(query.entities[e]);
                if (judgments.positives.empty()) {
                    row.zero_positives = true;
                } else {
                    for (auto k : config.k) {
                        row.recall.push_back(recall_at_k(outcome.per_entity[e], judgments, k));
                        row.ndcg.push_back(ndcg_at_k(outcome.per_entity[e], judgments, k));
                    }
                    if (e == 0) row.vqa_score = vqa_score;
                }
                row_slots[slot].push_back(std::move(row));
            }
        } catch (const std::exception& ex) {
            failure_slots[slot] = strategy.label() + "/" + query.query_id + ": " + ex.what();
        }
    });

    RunResult result;
    std::vector<MetricRow> rows;
    for (std::size_t si = 0; si < n_strategies; ++si) {
        std::vector<OutcomeRecord> strategy_outcomes;
        for (std::size_t qi = 0; qi < n_queries; ++qi) {
            const std::size_t slot = si * n_queries + qi;
            if (failure_slots[slot]) {
                result.failures.push_back(*failure_slots[slot]);
                continue;
            }
            for (auto& row : row_slots[slot]) rows.push_back(std::move(row));
            for (auto& rec : outcome_slots[slot]) strategy_outcomes.push_back(std::move(rec));
        }
        const std::string label = config.strategies[si].to_strategy(false).label();
        write_outcomes_jsonl(config.output_dir / ("outcomes_" + label + ".jsonl"),
                             strategy_outcomes);
    }

    if (config.vqa.enabled) {
        std::ofstream answers(config.output_dir / "answers.jsonl", std::ios::trunc);
        for (const auto& a : answer_slots) {
            if (a) answers << a->dump() << '\n';
        }
    }

    const std::size_t total_jobs = jobs.size();
    const double failure_fraction =
        total_jobs == 0 ? 0.0
                        : static_cast<double>(result.failures.size()) /
                              static_cast<double>(total_jobs);
    if (rows.empty()) {
        throw std::runtime_error("run_experiment: every query failed; nothing to report");
    }

    result.report = aggregate_report(std::move(rows), config.k);

    json manifest;
    manifest["config_sha256"] = sha256_hex(config_to_json(config));
    manifest["benchmark"] = benchmark.name;
    manifest["n_queries"] = benchmark.queries.size();
    json provider_models;
    for (const auto& [role, e] : config.providers) {
        provider_models[role] = e.kind == "mock" ? "mock" : e.model;
    }
    manifest["providers"] = provider_models;
    json strategy_labels = json::array();
    for (const auto& s : config.strategies) {
        strategy_labels.push_back(s.to_strategy(false).label());
    }
    manifest["strategies"] = strategy_labels;
    manifest["k"] = config.k;
    manifest["seed"] = config.seed;
    manifest["failures"] = result.failures;
    result.manifest_json = manifest.dump(2);

    {
        std::ofstream out(config.output_dir / "report.json", std::ios::trunc);
        out << report_to_json(result.report) << '\n';
    }
    {
        std::ofstream out(config.output_dir / "report.txt", std::ios::trunc);
        out << render_table(result.report);
    }
    write_rows_jsonl(config.output_dir / "per_query.jsonl", result.report.rows, config.k);
    {
        std::ofstream out(config.output_dir / "manifest.json", std::ios::trunc);
        out << result.manifest_json << '\n';
    }

    if (failure_fraction > config.failure_budget) {
        std::cerr << "error: " << result.failures.size() << "/" << total_jobs
                  << " strategy-query runs failed, above the budget of "
                  << config.failure_budget << '\n';
        result.exit_code = 2;
    }
    return result;
}

} // namespace visret
