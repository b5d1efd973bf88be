#include "visret/testkit.hpp"

#include "visret/corpus.hpp"
#include "visret/prompts.hpp"

#include "planted_harness.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace visret;
using visret::test::PlantedHarness;
using visret::test::TempDir;

namespace {

std::string serialize_planted(const PlantedBenchmark& p) {
    std::ostringstream out;
    for (const auto& q : p.benchmark.queries) out << to_jsonl_line(q) << '\n';
    for (const auto& e : p.corpus_embeddings) {
        out << e.image_id << ':';
        for (float f : e.vector) out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
    for (const auto& [text, id] : p.fixtures.query_text_to_id) out << text << "->" << id;
    for (const auto& [re, id] : p.fixtures.rephrase_to_id) out << re << "->" << id;
    return out.str();
}

double unit_norm_error(const EmbeddingVector& v) {
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    return std::abs(std::sqrt(norm) - 1.0);
}

} // namespace

TEST_CASE("planted generation is a pure function of the spec") {
    PlantedBenchmarkSpec spec;
    spec.n_queries = 8;
    spec.images_per_entity = 20;
    spec.positives_per_entity = 4;
    spec.dim = 12;
    spec.seed = 7;
    CHECK(serialize_planted(generate_planted_benchmark(spec)) ==
          serialize_planted(generate_planted_benchmark(spec)));

    PlantedBenchmarkSpec other = spec;
    other.seed = 8;
    CHECK(serialize_planted(generate_planted_benchmark(spec)) !=
          serialize_planted(generate_planted_benchmark(other)));
}

TEST_CASE("planted spec validation") {
    PlantedBenchmarkSpec spec;
    spec.positives_per_entity = spec.images_per_entity;
    CHECK_THROWS_AS(generate_planted_benchmark(spec), std::invalid_argument);
    spec = {};
    spec.n_queries = 0;
    CHECK_THROWS_AS(generate_planted_benchmark(spec), std::invalid_argument);
    spec = {};
    spec.dim = 1;
    CHECK_THROWS_AS(generate_planted_benchmark(spec), std::invalid_argument);
    spec = {};
    spec.sigma_gen = 0.0;
    CHECK_THROWS_AS(generate_planted_benchmark(spec), std::invalid_argument);
}

TEST_CASE("planted benchmark satisfies corpus invariants") {
    PlantedBenchmarkSpec spec;
    spec.n_queries = 5;
    spec.images_per_entity = 30;
    spec.positives_per_entity = 6;
    spec.dim = 8;
    const PlantedBenchmark p = generate_planted_benchmark(spec);
    CHECK(p.benchmark.queries.size() == 5);
    CHECK_FALSE(validate_benchmark(p.benchmark).has_errors());
    CHECK(p.corpus_embeddings.size() == 5 * 30);
    for (const auto& q : p.benchmark.queries) {
        std::size_t positives = 0;
        for (const auto& img : q.entities[0].images) positives += img.relevance;
        CHECK(positives == 6);
    }
    for (const auto& e : p.corpus_embeddings) {
        CHECK(unit_norm_error(e.vector) <= 1e-6);
    }
}

TEST_CASE("planted fixtures survive a file round trip") {
    TempDir dir("fixtures");
    PlantedBenchmarkSpec spec;
    spec.n_queries = 4;
    spec.images_per_entity = 10;
    spec.positives_per_entity = 2;
    spec.dim = 6;
    const PlantedBenchmark p = generate_planted_benchmark(spec);
    const auto path = dir.path() / "fixtures.json";
    write_planted_fixtures(path, p.fixtures);
    const PlantedFixtures loaded = read_planted_fixtures(path);
    CHECK(loaded.dim == p.fixtures.dim);
    CHECK(loaded.seed == p.fixtures.seed);
    CHECK(loaded.sigma_text == p.fixtures.sigma_text);
    CHECK(loaded.sigma_gen == p.fixtures.sigma_gen);
    CHECK(loaded.query_text_to_id == p.fixtures.query_text_to_id);
    CHECK(loaded.rephrase_to_id == p.fixtures.rephrase_to_id);

    const std::string qid = p.fixtures.query_text_to_id.begin()->second;
    CHECK(loaded.direction_for(qid) == p.fixtures.direction_for(qid));
}

TEST_CASE("mock embedder is deterministic with unit-norm outputs") {
    MockEmbeddingProvider embedder(64, 42);
    const EmbeddingVector a = embedder.embed_text("abc");
    const EmbeddingVector b = embedder.embed_text("abc");
    CHECK(a == b);
    CHECK(a.size() == 64);
    CHECK(unit_norm_error(a) <= 1e-6);
    CHECK(embedder.embed_text("abd") != a);
    CHECK(embedder.embed_image("abc") != a); // text and image spaces differ

    MockEmbeddingProvider other_seed(64, 43);
    CHECK(other_seed.embed_text("abc") != a);

    CHECK_THROWS_AS(embedder.embed_text(""), std::invalid_argument);
    CHECK_THROWS_AS(embedder.embed_image(""), std::invalid_argument);
}

TEST_CASE("mock chat answers fixtures and errors on a miss") {
    MockChatProvider chat;
    chat.add_substring(
        "What shape are the flowers of bush flax (scientific name: Astelia fragrans)?",
        "flowers of bush flax");
    CHECK(rephrase_for_t2i(chat, DatasetKind::SingleEntityVQA,
                           "What shape are the flowers of bush flax (scientific name: "
                           "Astelia fragrans)?") == "flowers of bush flax");
    CHECK_THROWS_WITH_AS(chat.complete({.prompt = "unmatched prompt"}),
                         doctest::Contains("no fixture"), ProviderError);
    CHECK(chat.calls() == 2);
}

TEST_CASE("mock t2i payloads are deterministic and distinct per index") {
    MockT2IProvider t2i(7);
    const auto first = t2i.generate("Generate a small image of the red fox", 3,
                                    ImageQuality::High);
    const auto second = t2i.generate("Generate a small image of the red fox", 3,
                                     ImageQuality::High);
    CHECK(first == second);
    CHECK(first.size() == 3);
    CHECK(first[0] != first[1]);
    CHECK(first[1] != first[2]);
    const auto other = t2i.generate("Generate a small image of the arctic fox", 3,
                                    ImageQuality::High);
    CHECK(other[0] != first[0]);
    CHECK_THROWS_AS(t2i.generate("x", 0, ImageQuality::High), std::invalid_argument);
}

TEST_CASE("mocks satisfy the shared provider contracts") {
    PlantedBenchmarkSpec spec;
    spec.n_queries = 3;
    spec.images_per_entity = 12;
    spec.positives_per_entity = 3;
    spec.dim = 10;
    PlantedHarness harness(spec);
    const auto providers = const_cast<PlantedHarness&>(harness).providers();

    // chat: nonempty response for a known prompt
    const auto& query = harness.benchmark().queries[0];
    const std::string phrase =
        rephrase_for_t2i(*providers.chat, DatasetKind::SingleEntityVQA, query.text);
    CHECK_FALSE(phrase.empty());

    // t2i: exactly m nonempty payloads
    const T2IInstruction instruction = build_t2i_instruction(phrase, query.query_id, 0);
    const auto images = generate_images(*providers.t2i, instruction, 4);
    CHECK(images.size() == 4);
    for (const auto& img : images) CHECK_FALSE(img.bytes.empty());

    // embedder: stable dim, finite unit vectors for both modalities
    const EmbeddingVector text_vec = providers.embedder->embed_text(query.text);
    const EmbeddingVector image_vec = providers.embedder->embed_image(images[0].bytes);
    CHECK(text_vec.size() == spec.dim);
    CHECK(image_vec.size() == spec.dim);
    CHECK(unit_norm_error(text_vec) <= 1e-6);
    CHECK(unit_norm_error(image_vec) <= 1e-6);
}

TEST_CASE("equal text and generation noise make original and visret(m=1) indistinguishable") {
    PlantedBenchmarkSpec spec;
    spec.n_queries = 200;
    spec.images_per_entity = 64;
    spec.positives_per_entity = 8;
    spec.dim = 32;
    spec.sigma_text = 0.3;
    spec.sigma_gen = 0.3;
    spec.seed = 91;
    PlantedHarness harness(spec);

    const double original =
        harness.mean_ndcg({.kind = StrategyKind::OriginalQuery}, 10);
    const double visret_single =
        harness.mean_ndcg({.kind = StrategyKind::VisRet, .m = 1}, 10);
    CHECK(std::abs(original - visret_single) < 0.02);
}

TEST_CASE("much cleaner generations make visret(m=3) beat the original query") {
    PlantedBenchmarkSpec spec;
    spec.n_queries = 200;
    spec.images_per_entity = 64;
    spec.positives_per_entity = 8;
    spec.dim = 32;
    spec.sigma_text = 0.4;
    spec.sigma_gen = 0.05;
    spec.seed = 92;
    PlantedHarness harness(spec);

    const double original =
        harness.mean_ndcg({.kind = StrategyKind::OriginalQuery}, 10);
    const double visret =
        harness.mean_ndcg({.kind = StrategyKind::VisRet, .m = 3}, 10);
    CHECK(visret > original);
}
