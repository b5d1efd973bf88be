#include "visret/providers.hpp"

#include "visret/digest.hpp"
#include "visret/prompts.hpp"
#include "visret/testkit.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace visret;
using visret::test::FlakyChatProvider;

namespace {

const std::string kBushFlaxQuery =
    "What shape are the flowers of bush flax (scientific name: Astelia fragrans)?";
const std::string kSnakeQuery =
    "Are the tongues of grass snake (scientific name: Natrix helvetica) and Chicken Snake "
    "(scientific name: Spilotes pullatus) the same color?";

} // namespace

TEST_CASE("rephrase prompt embeds the query and the few-shot examples") {
    const std::string prompt = prompts::build_rephrase_prompt(
        DatasetKind::SingleEntityVQA, "How long are the ears of the fennec fox?",
        std::nullopt);
    CHECK(prompt.find("Original query: How long are the ears of the fennec fox?") !=
          std::string::npos);
    CHECK(prompt.find("Rephrased query: flowers of bush flax") != std::string::npos);
    CHECK(prompt.find("tawny pipit with its underside wings shown") != std::string::npos);
    CHECK(prompt.rfind("Rephrased query:") == prompt.size() - std::string("Rephrased query:").size());

    // byte-stable assembly
    CHECK(prompt == prompts::build_rephrase_prompt(
                        DatasetKind::SingleEntityVQA,
                        "How long are the ears of the fennec fox?", std::nullopt));
}

TEST_CASE("multi-entity rephrase prompt carries the entity of interest") {
    const std::string prompt = prompts::build_rephrase_prompt(
        DatasetKind::MultiEntityVQA, kSnakeQuery, std::string("Spilotes pullatus"));
    CHECK(prompt.find("Entity of interest: Spilotes pullatus") != std::string::npos);
    CHECK(prompt.find("Rephrased query: Chicken Snake with its tongue shown") !=
          std::string::npos);
    CHECK_THROWS_AS(
        prompts::build_rephrase_prompt(DatasetKind::MultiEntityVQA, kSnakeQuery, std::nullopt),
        std::invalid_argument);
}

TEST_CASE("rephrase_for_t2i returns the fixture phrase, trimmed") {
    MockChatProvider chat;
    chat.add_substring(kBushFlaxQuery, "  flowers of bush flax\n");
    CHECK(rephrase_for_t2i(chat, DatasetKind::SingleEntityVQA, kBushFlaxQuery) ==
          "flowers of bush flax");

    MockChatProvider multi;
    multi.add_substring("Entity of interest: Spilotes pullatus",
                        "Chicken Snake with its tongue shown");
    CHECK(rephrase_for_t2i(multi, DatasetKind::MultiEntityVQA, kSnakeQuery,
                           std::string("Spilotes pullatus")) ==
          "Chicken Snake with its tongue shown");
}

TEST_CASE("rephrase_for_t2i rejects empty responses") {
    MockChatProvider chat;
    chat.add_substring("Original query:", "   \n ");
    CHECK_THROWS_AS(rephrase_for_t2i(chat, DatasetKind::SingleEntityVQA, "any question"),
                    ProviderError);
}

TEST_CASE("build_t2i_instruction applies the fixed template") {
    const T2IInstruction i1 = build_t2i_instruction("flowers of bush flax", "q1", 0);
    CHECK(i1.text == "Generate a small image of the flowers of bush flax");
    CHECK(i1.source_query_id == "q1");

    const T2IInstruction i2 =
        build_t2i_instruction("tawny pipit with its underside wings shown", "q2", 1);
    CHECK(i2.text == "Generate a small image of the tawny pipit with its underside wings shown");
    CHECK(i2.entity_index == 1);

    CHECK_THROWS_AS(build_t2i_instruction("", "q", 0), std::invalid_argument);
}

TEST_CASE("generate_images stamps hashes and 1-based indices") {
    MockT2IProvider t2i(99);
    const T2IInstruction instruction = build_t2i_instruction("a red fox", "q1", 0);
    const auto images = generate_images(t2i, instruction, 3);
    REQUIRE(images.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(images[static_cast<std::size_t>(i)].generation_index == i + 1);
        CHECK(images[static_cast<std::size_t>(i)].content_hash ==
              sha256_hex(images[static_cast<std::size_t>(i)].bytes));
        CHECK(images[static_cast<std::size_t>(i)].instruction.text == instruction.text);
    }
    CHECK_THROWS_AS(generate_images(t2i, instruction, 0), std::invalid_argument);

    // deterministic: same instruction, same hashes
    const auto again = generate_images(t2i, instruction, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(again[i].content_hash == images[i].content_hash);
    }
}

TEST_CASE("chat_complete validates its inputs") {
    MockChatProvider chat;
    chat.add_substring("hello", "world");
    CHECK(chat_complete(chat, "hello there") == "world");
    CHECK_THROWS_AS(chat_complete(chat, ""), std::invalid_argument);
    CHECK_THROWS_AS(chat_complete(chat, "hello", -1.0), std::invalid_argument);
}

TEST_CASE("require_api_key fails before any request when the env var is unset") {
    ProviderEndpoint endpoint;
    endpoint.api_key_env = "VISRET_TEST_SURELY_UNSET_KEY";
    ::unsetenv(endpoint.api_key_env.c_str());
    CHECK_THROWS_AS(require_api_key(endpoint), ProviderError);
    try {
        require_api_key(endpoint);
    } catch (const ProviderError& e) {
        CHECK(e.kind() == ProviderError::Kind::Auth);
    }

    ::setenv(endpoint.api_key_env.c_str(), "sk-test", 1);
    CHECK(require_api_key(endpoint) == "sk-test");
    ::unsetenv(endpoint.api_key_env.c_str());
}

TEST_CASE("with_retries recovers from transient failures within the budget") {
    RetryPolicy policy;
    policy.max_retries = 3;
    policy.initial_delay = std::chrono::milliseconds(1);

    FlakyChatProvider twice(2, "recovered");
    const std::string out =
        with_retries(policy, [&] { return twice.complete({.prompt = "p"}); });
    CHECK(out == "recovered");
    CHECK(twice.calls() == 3); // succeeds on the 3rd attempt

    FlakyChatProvider four(4, "never");
    policy.max_retries = 2;
    CHECK_THROWS_AS(
        with_retries(policy, [&] { return four.complete({.prompt = "p"}); }),
        ProviderError);
    CHECK(four.calls() == 3); // 1 try + 2 retries
}

TEST_CASE("with_retries does not retry non-transient errors") {
    RetryPolicy policy;
    policy.initial_delay = std::chrono::milliseconds(1);
    int calls = 0;
    CHECK_THROWS_AS(with_retries(policy,
                                 [&]() -> int {
                                     ++calls;
                                     throw ProviderError(ProviderError::Kind::Auth, "denied");
                                 }),
                    ProviderError);
    CHECK(calls == 1);
}

TEST_CASE("InflightLimiter caps concurrent provider calls") {
    InflightLimiter limiter(2);
    std::atomic<int> inflight{0};
    std::atomic<int> peak{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&] {
            InflightLimiter::Token token(limiter);
            const int now = inflight.fetch_add(1) + 1;
            int expected = peak.load();
            while (now > expected && !peak.compare_exchange_weak(expected, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            inflight.fetch_sub(1);
        });
    }
    for (auto& th : threads) th.join();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}

TEST_CASE("DriftGuardEmbedder rejects dimension drift") {
    class ShrinkingEmbedder : public EmbeddingProvider {
    public:
        EmbeddingVector embed_text(const std::string&) override { return next(); }
        EmbeddingVector embed_image(const std::string&) override { return next(); }
        const std::string& model_name() const override { return model_; }

    private:
        EmbeddingVector next() {
            return EmbeddingVector(calls_++ == 0 ? 64 : 32, 0.5f);
        }
        int calls_ = 0;
        std::string model_ = "shrinking";
    };

    ShrinkingEmbedder inner;
    DriftGuardEmbedder guard(inner);
    CHECK(guard.embed_text("first").size() == 64);
    CHECK_THROWS_WITH_AS(guard.embed_image("payload"), doctest::Contains("drift"),
                         ProviderError);
}
