#include "visret/corpus.hpp"
#include "visret/experiment.hpp"
#include "visret/fusion.hpp"
#include "visret/pipeline.hpp"
#include "visret/prompts.hpp"
#include "visret/testkit.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace {

using namespace visret;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitProviderBudget = 2;
constexpr int kExitIo = 3;

struct RunOverrides {
    std::string strategy;
    std::vector<std::size_t> k;
    std::optional<int> m;
    std::optional<double> rrf_lambda;
    std::string cache_dir;
    std::string output_dir;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    bool allow_partial = false;
    bool dry_run = false;
};

void apply_overrides(ExperimentConfig& config, const RunOverrides& o) {
    if (!o.strategy.empty()) {
        std::vector<StrategyConfig> kept;
        for (const auto& s : config.strategies) {
            if (s.to_strategy(false).label() == o.strategy) kept.push_back(s);
        }
        if (kept.empty()) {
            throw ConfigError("no strategy named '" + o.strategy + "' in config");
        }
        config.strategies = std::move(kept);
    }
    if (!o.k.empty()) config.k = o.k;
    if (o.m) {
        for (auto& s : config.strategies) s.m = *o.m;
    }
    if (o.rrf_lambda) {
        for (auto& s : config.strategies) s.rrf_lambda = *o.rrf_lambda;
    }
    if (!o.cache_dir.empty()) config.cache_dir = o.cache_dir;
    if (!o.output_dir.empty()) config.output_dir = o.output_dir;
    if (o.workers) config.workers = *o.workers;
    if (o.seed) config.seed = *o.seed;
    if (o.allow_partial) config.allow_partial = true;
    if (o.dry_run) config.dry_run = true;
}

void add_override_flags(CLI::App* cmd, RunOverrides& o) {
    cmd->add_option("--strategy", o.strategy, "Run only the strategy with this label");
    cmd->add_option("--k", o.k, "Cutoffs for Recall@k / NDCG@k");
    cmd->add_option("--m", o.m, "Override the number of generated images per query");
    cmd->add_option("--rrf-lambda", o.rrf_lambda, "Override the RRF lambda");
    cmd->add_option("--cache-dir", o.cache_dir, "Provider cache directory");
    cmd->add_option("--output-dir", o.output_dir, "Output directory");
    cmd->add_option("--workers", o.workers, "Concurrent query workers");
    cmd->add_option("--seed", o.seed, "Seed for mock providers");
    cmd->add_flag("--allow-partial", o.allow_partial,
                  "Fuse fewer lists when some generations fail");
    cmd->add_flag("--dry-run", o.dry_run,
                  "Print assembled prompts and planned provider calls, no network");
}

// retriever name -> rankings, from outcome JSONL files
std::map<std::string, RetrieverRankings> load_baselines(
    const std::vector<std::string>& paths) {
    std::map<std::string, RetrieverRankings> baselines;
    for (const auto& path : paths) {
        const auto records = read_outcomes_jsonl(path);
        std::string name = records.empty() ? std::filesystem::path(path).stem().string()
                                           : records.front().strategy;
        if (baselines.count(name)) {
            name += "@" + std::filesystem::path(path).stem().string();
        }
        RetrieverRankings rankings;
        for (const auto& rec : records) {
            rankings[{rec.query_id, rec.entity_index}] = rec.ranking;
        }
        baselines.emplace(std::move(name), std::move(rankings));
    }
    return baselines;
}

int cmd_ingest(const std::string& benchmark_path, bool check_uris) {
    std::vector<std::string> warnings;
    const Benchmark benchmark = load_benchmark(benchmark_path, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    const ValidationReport report = validate_benchmark(benchmark, check_uris);
    for (const auto& issue : report.issues) {
        std::cerr << (issue.severity == ValidationIssue::Severity::Error ? "error: "
                                                                         : "warning: ")
                  << issue.message << '\n';
    }
    std::cout << format_stats(corpus_stats(benchmark), benchmark.name);
    std::cout << "validation: " << report.error_count() << " error(s), "
              << report.warning_count() << " warning(s)\n";
    return report.has_errors() ? kExitValidation : kExitOk;
}

int cmd_embed(const std::string& config_path, const std::string& output) {
    ExperimentConfig config = load_config(config_path);
    if (!config.providers.count("embedding")) {
        throw ConfigError("embed: config declares no 'embedding' provider");
    }
    const Benchmark benchmark = load_benchmark(config.benchmark_path);
    ProviderSet providers = build_providers(config);

    std::vector<EmbeddingEntry> entries;
    std::set<std::string> seen;
    for (const auto& query : benchmark.queries) {
        for (const auto& slot : query.entities) {
            for (const auto& img : slot.images) {
                if (!seen.insert(img.image_id).second) continue;
                entries.push_back(
                    {img.image_id,
                     providers.pipeline.embedder->embed_image(read_uri_bytes(img.uri))});
            }
        }
    }
    write_embedding_file(output, entries);
    std::cout << "wrote " << entries.size() << " embeddings to " << output << '\n';
    return kExitOk;
}

int cmd_retrieve(const std::string& config_path, const RunOverrides& overrides,
                 const std::string& output) {
    ExperimentConfig config = load_config(config_path);
    apply_overrides(config, overrides);
    validate_config(config);
    if (!output.empty() && config.strategies.size() != 1) {
        throw ConfigError("retrieve --output needs exactly one strategy; use --strategy");
    }

    const Benchmark benchmark = load_benchmark(config.benchmark_path);
    ProviderSet providers = build_providers(config);
    const auto corpus_vectors =
        load_corpus_vectors(config, benchmark, providers.pipeline.embedder);
    const auto indexes = build_query_indexes(benchmark, corpus_vectors);

    std::filesystem::create_directories(config.output_dir);
    for (const auto& sc : config.strategies) {
        const RetrievalStrategy strategy = sc.to_strategy(config.allow_partial);
        std::vector<OutcomeRecord> records;
        for (std::size_t qi = 0; qi < benchmark.queries.size(); ++qi) {
            std::vector<const VectorIndex*> query_indexes;
            for (const auto& idx : indexes[qi]) query_indexes.push_back(&idx);
            const RetrievalOutcome outcome =
                run_strategy(strategy, benchmark.queries[qi], query_indexes,
                             providers.pipeline);
            for (auto& rec : outcome_records(outcome, benchmark.queries[qi])) {
                records.push_back(std::move(rec));
            }
        }
        const std::filesystem::path path =
            output.empty()
                ? config.output_dir / ("outcomes_" + strategy.label() + ".jsonl")
                : std::filesystem::path(output);
        write_outcomes_jsonl(path, records);
        std::cout << "wrote " << records.size() << " rankings to " << path.string() << '\n';
    }
    return kExitOk;
}

int cmd_fuse(const std::vector<std::string>& inputs, double lambda,
             std::optional<std::size_t> output_k, const std::string& output) {
    if (inputs.empty()) throw ConfigError("fuse: no input ranking files");
    FusionParams params;
    params.lambda = lambda;
    params.output_k = output_k;

    // (query, entity) -> one list per input file, file order preserved
    std::vector<std::pair<std::string, int>> key_order;
    std::map<std::pair<std::string, int>, std::vector<RankedList>> grouped;
    for (const auto& path : inputs) {
        for (auto& rec : read_outcomes_jsonl(path)) {
            const std::pair<std::string, int> key{rec.query_id, rec.entity_index};
            if (!grouped.count(key)) key_order.push_back(key);
            grouped[key].push_back(std::move(rec.ranking));
        }
    }

    std::vector<OutcomeRecord> fused;
    for (const auto& key : key_order) {
        RankedList merged = rrf_fuse(grouped[key], params);
        OutcomeRecord rec;
        rec.query_id = key.first;
        rec.entity_index = key.second;
        rec.strategy = "rrf_fusion";
        merged.strategy = rec.strategy;
        rec.ranking = std::move(merged);
        fused.push_back(std::move(rec));
    }
    write_outcomes_jsonl(output, fused);
    std::cout << "fused " << inputs.size() << " ranking files into " << output << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& benchmark_path, const std::vector<std::string>& rankings,
             std::vector<std::size_t> ks, const std::string& output_dir) {
    if (ks.empty()) ks = {1, 10, 30};
    const Benchmark benchmark = load_benchmark(benchmark_path);

    std::map<std::pair<std::string, int>, const EntitySlot*> slots;
    for (const auto& query : benchmark.queries) {
        for (std::size_t e = 0; e < query.entities.size(); ++e) {
            slots[{query.query_id, static_cast<int>(e)}] = &query.entities[e];
        }
    }

    std::vector<MetricRow> rows;
    for (const auto& path : rankings) {
        for (const auto& rec : read_outcomes_jsonl(path)) {
            auto it = slots.find({rec.query_id, rec.entity_index});
            if (it == slots.end()) {
                throw ConfigError("eval: ranking for unknown query '" + rec.query_id +
                                  "' entity " + std::to_string(rec.entity_index));
            }
            MetricRow row;
            row.query_id = rec.query_id;
            row.entity_index = rec.entity_index;
            row.strategy = rec.strategy;
            const RelevanceJudgments judgments = judgments_from_slot(*it->second);
            if (judgments.positives.empty()) {
                row.zero_positives = true;
            } else {
                for (auto k : ks) {
                    row.recall.push_back(recall_at_k(rec.ranking, judgments, k));
                    row.ndcg.push_back(ndcg_at_k(rec.ranking, judgments, k));
                }
            }
            rows.push_back(std::move(row));
        }
    }

    const MetricReport report = aggregate_report(std::move(rows), ks);
    std::cout << render_table(report);
    if (!output_dir.empty()) {
        std::filesystem::create_directories(output_dir);
        std::ofstream json_out(std::filesystem::path(output_dir) / "report.json");
        json_out << report_to_json(report) << '\n';
        std::ofstream table_out(std::filesystem::path(output_dir) / "report.txt");
        table_out << render_table(report);
        write_rows_jsonl(std::filesystem::path(output_dir) / "per_query.jsonl", report.rows,
                         ks);
    }
    return kExitOk;
}

int cmd_vqa(const std::string& config_path, const std::string& rankings_path,
            std::optional<int> context_k) {
    ExperimentConfig config = load_config(config_path);
    if (!config.providers.count("reader") || !config.providers.count("judge")) {
        throw ConfigError("vqa: config must declare 'reader' and 'judge' providers");
    }
    if (context_k) config.vqa.context_k = *context_k;
    const Benchmark benchmark = load_benchmark(config.benchmark_path);
    ProviderSet providers = build_providers(config);

    std::map<std::string, const QueryRecord*> queries;
    for (const auto& query : benchmark.queries) queries[query.query_id] = &query;

    // Regroup ranking records into per-query pseudo-outcomes.
    std::vector<std::string> query_order;
    std::map<std::string, RetrievalOutcome> outcomes;
    for (auto& rec : read_outcomes_jsonl(rankings_path)) {
        if (!outcomes.count(rec.query_id)) query_order.push_back(rec.query_id);
        auto& outcome = outcomes[rec.query_id];
        if (outcome.per_entity.size() <= static_cast<std::size_t>(rec.entity_index)) {
            outcome.per_entity.resize(static_cast<std::size_t>(rec.entity_index) + 1);
        }
        outcome.per_entity[static_cast<std::size_t>(rec.entity_index)] =
            std::move(rec.ranking);
    }

    std::filesystem::create_directories(config.output_dir);
    std::ofstream answers(config.output_dir / "answers.jsonl", std::ios::trunc);
    double score_sum = 0.0;
    std::size_t scored = 0;
    for (const auto& qid : query_order) {
        const auto& outcome = outcomes[qid];
        auto it = queries.find(qid);
        if (it == queries.end()) {
            throw ConfigError("vqa: ranking for unknown query '" + qid + "'");
        }
        const QueryRecord& query = *it->second;
        if (!query.gold_answer) {
            std::cerr << "warning: query " << qid << " has no gold answer, skipping\n";
            continue;
        }
        const std::vector<ContextImage> context =
            config.vqa.context_k == 0
                ? std::vector<ContextImage>{}
                : compose_context(outcome, query, config.vqa.context_k);
        const VqaAnswer answer = answer_vqa(*providers.reader, query, context);
        const JudgeVerdict verdict =
            judge_answer(*providers.judge, query.text, *query.gold_answer, answer.answer);
        score_sum += verdict.score;
        ++scored;
        answers << json{{"query_id", qid},
                        {"answer", answer.answer},
                        {"marker_found", answer.marker_found},
                        {"score", verdict.score},
                        {"hallucination", verdict.hallucination},
                        {"redundant", verdict.redundant}}
                       .dump()
                << '\n';
    }
    if (scored == 0) {
        std::cerr << "vqa: no queries scored\n";
        return kExitValidation;
    }
    std::cout << "VQA accuracy: " << 100.0 * score_sum / static_cast<double>(scored)
              << " over " << scored << " queries\n";
    return kExitOk;
}

int cmd_filter_hard(const std::string& benchmark_path,
                    const std::vector<std::string>& rankings, const std::string& output) {
    const Benchmark benchmark = load_benchmark(benchmark_path);
    const auto baselines = load_baselines(rankings);
    const Benchmark hard = filter_hard(benchmark, baselines);
    save_benchmark(hard, output);
    std::cout << "kept " << hard.queries.size() << " of " << benchmark.queries.size()
              << " queries in " << output << '\n';
    return kExitOk;
}

int cmd_synth(const PlantedBenchmarkSpec& spec, const std::string& output_dir) {
    const PlantedBenchmark planted = generate_planted_benchmark(spec);
    const std::filesystem::path dir(output_dir);
    std::filesystem::create_directories(dir);

    save_benchmark(planted.benchmark, dir / "benchmark.jsonl");
    write_embedding_file(dir / "corpus.vemb", planted.corpus_embeddings);
    write_planted_fixtures(dir / "fixtures.json", planted.fixtures);

    // Ready-to-run mock config against the generated data.
    json config = {
        {"benchmark", "benchmark.jsonl"},
        {"embeddings", "corpus.vemb"},
        {"planted_fixtures", "fixtures.json"},
        {"providers",
         {{"chat", {{"kind", "mock"}}},
          {"t2i", {{"kind", "mock"}}},
          {"embedding", {{"kind", "mock"}}},
          {"reader", {{"kind", "mock"}}},
          {"judge", {{"kind", "mock"}}}}},
        {"strategies", json::array({{{"kind", "original_query"}},
                                    {{"kind", "query_expansion"}},
                                    {{"kind", "visret"}, {"m", 3}, {"rrf_lambda", 1.0}},
                                    {{"kind", "visret"},
                                     {"name", "visret_single_image"},
                                     {"m", 1},
                                     {"rrf_lambda", 1.0}}})},
        {"k", {1, 10, 30}},
        {"cache_dir", "cache"},
        {"output_dir", "out"},
        {"seed", spec.seed},
        {"workers", 4},
        // planted uris are not resolvable files, so VQA runs knowledge-only
        {"vqa", {{"enabled", false}, {"context_k", 0}}}};
    std::ofstream config_out(dir / "config.json", std::ios::trunc);
    config_out << config.dump(2) << '\n';

    std::cout << "planted benchmark with " << planted.benchmark.queries.size()
              << " queries in " << dir.string() << "\n"
              << "run it with: visret run --config " << (dir / "config.json").string()
              << '\n';
    return kExitOk;
}

int cmd_run(const std::string& config_path, const RunOverrides& overrides) {
    ExperimentConfig config = load_config(config_path);
    apply_overrides(config, overrides);
    const RunResult result = run_experiment(config);
    if (!config.dry_run) {
        std::cout << render_table(result.report);
        for (const auto& failure : result.failures) {
            std::cerr << "failed: " << failure << '\n';
        }
    }
    return result.exit_code;
}

int cmd_report(const std::string& rows_path, const std::string& output_dir) {
    std::vector<std::size_t> ks;
    std::vector<MetricRow> rows = read_rows_jsonl(rows_path, ks);
    const MetricReport report = aggregate_report(std::move(rows), ks);
    std::cout << render_table(report);
    if (!output_dir.empty()) {
        std::filesystem::create_directories(output_dir);
        std::ofstream json_out(std::filesystem::path(output_dir) / "report.json");
        json_out << report_to_json(report) << '\n';
        std::ofstream table_out(std::filesystem::path(output_dir) / "report.txt");
        table_out << render_table(report);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visualize-then-Retrieve: text-to-image retrieval experiments"};
    app.require_subcommand(1);

    // ingest
    std::string ingest_benchmark;
    bool ingest_check_uris = false;
    auto* ingest = app.add_subcommand("ingest", "Validate a benchmark and print its stats");
    ingest->add_option("--benchmark", ingest_benchmark, "Benchmark JSONL")->required();
    ingest->add_flag("--check-uris", ingest_check_uris, "Also check that file URIs exist");

    // embed
    std::string embed_config;
    std::string embed_output;
    auto* embed =
        app.add_subcommand("embed", "Embed the corpus through the configured endpoint");
    embed->add_option("--config", embed_config, "Experiment config JSON")->required();
    embed->add_option("--output", embed_output, "Embedding file to write")->required();

    // retrieve
    std::string retrieve_config;
    std::string retrieve_output;
    RunOverrides retrieve_overrides;
    auto* retrieve = app.add_subcommand("retrieve", "Run retrieval and export rankings");
    retrieve->add_option("--config", retrieve_config, "Experiment config JSON")->required();
    retrieve->add_option("--output", retrieve_output,
                         "Rankings JSONL to write (single strategy only)");
    add_override_flags(retrieve, retrieve_overrides);

    // fuse
    std::vector<std::string> fuse_inputs;
    double fuse_lambda = 1.0;
    std::optional<std::size_t> fuse_output_k;
    std::string fuse_output;
    auto* fuse = app.add_subcommand("fuse", "RRF-fuse ranking files");
    fuse->add_option("--inputs", fuse_inputs, "Ranking JSONL files")->required();
    fuse->add_option("--rrf-lambda", fuse_lambda, "RRF lambda");
    fuse->add_option("--output-k", fuse_output_k, "Truncate fused lists to this length");
    fuse->add_option("--output", fuse_output, "Fused rankings JSONL")->required();

    // eval
    std::string eval_benchmark;
    std::vector<std::string> eval_rankings;
    std::vector<std::size_t> eval_k;
    std::string eval_output_dir;
    auto* eval = app.add_subcommand("eval", "Compute Recall@k / NDCG@k from rankings");
    eval->add_option("--benchmark", eval_benchmark, "Benchmark JSONL")->required();
    eval->add_option("--rankings", eval_rankings, "Ranking JSONL files")->required();
    eval->add_option("--k", eval_k, "Cutoffs (default 1 10 30)");
    eval->add_option("--output-dir", eval_output_dir, "Write report files here");

    // vqa
    std::string vqa_config;
    std::string vqa_rankings;
    std::optional<int> vqa_context_k;
    auto* vqa = app.add_subcommand("vqa", "Answer queries from rankings and judge them");
    vqa->add_option("--config", vqa_config, "Experiment config JSON")->required();
    vqa->add_option("--rankings", vqa_rankings, "Rankings JSONL")->required();
    vqa->add_option("--context-k", vqa_context_k, "Total image budget per query");

    // filter-hard
    std::string fh_benchmark;
    std::vector<std::string> fh_rankings;
    std::string fh_output;
    auto* filter_hard_cmd = app.add_subcommand(
        "filter-hard", "Keep only queries no baseline retriever solves at rank 1");
    filter_hard_cmd->add_option("--benchmark", fh_benchmark, "Benchmark JSONL")->required();
    filter_hard_cmd->add_option("--rankings", fh_rankings, "Baseline ranking JSONL files")
        ->required();
    filter_hard_cmd->add_option("--output", fh_output, "Filtered benchmark JSONL")
        ->required();

    // synth
    PlantedBenchmarkSpec synth_spec;
    std::string synth_output_dir;
    auto* synth = app.add_subcommand("synth", "Generate a planted synthetic benchmark");
    synth->add_option("--output-dir", synth_output_dir, "Directory for the generated files")
        ->required();
    synth->add_option("--n-queries", synth_spec.n_queries, "Number of queries");
    synth->add_option("--images-per-entity", synth_spec.images_per_entity,
                      "Corpus size per entity");
    synth->add_option("--positives", synth_spec.positives_per_entity,
                      "Positive images per entity");
    synth->add_option("--dim", synth_spec.dim, "Embedding dimensionality");
    synth->add_option("--sigma-text", synth_spec.sigma_text, "Text query noise");
    synth->add_option("--sigma-gen", synth_spec.sigma_gen, "Generated image noise");
    synth->add_option("--sigma-neg", synth_spec.sigma_neg, "Negative spread");
    synth->add_option("--seed", synth_spec.seed, "Generator seed");

    // run
    std::string run_config;
    RunOverrides run_overrides;
    auto* run = app.add_subcommand("run", "Full experiment: retrieve, evaluate, report");
    run->add_option("--config", run_config, "Experiment config JSON")->required();
    add_override_flags(run, run_overrides);

    // report
    std::string report_rows;
    std::string report_output_dir;
    auto* report = app.add_subcommand("report", "Re-render reports from per-query rows");
    report->add_option("--rows", report_rows, "per_query.jsonl from a previous run")
        ->required();
    report->add_option("--output-dir", report_output_dir, "Write report files here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(ingest_benchmark, ingest_check_uris);
        if (embed->parsed()) return cmd_embed(embed_config, embed_output);
        if (retrieve->parsed()) {
            return cmd_retrieve(retrieve_config, retrieve_overrides, retrieve_output);
        }
        if (fuse->parsed()) {
            return cmd_fuse(fuse_inputs, fuse_lambda, fuse_output_k, fuse_output);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_benchmark, eval_rankings, eval_k, eval_output_dir);
        }
        if (vqa->parsed()) return cmd_vqa(vqa_config, vqa_rankings, vqa_context_k);
        if (filter_hard_cmd->parsed()) {
            return cmd_filter_hard(fh_benchmark, fh_rankings, fh_output);
        }
        if (synth->parsed()) return cmd_synth(synth_spec, synth_output_dir);
        if (run->parsed()) return cmd_run(run_config, run_overrides);
        if (report->parsed()) return cmd_report(report_rows, report_output_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const BenchmarkParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return kExitProviderBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitOk;
}
