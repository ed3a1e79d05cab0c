#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "vulnharness/knowledge.hpp"

using namespace vulnharness;
namespace fs = std::filesystem;

namespace {

// Looks up fixed vectors by exact text; anything else is a test bug.
class TableEmbedder : public Embedder {
public:
    TableEmbedder(Eigen::Index dim, std::map<std::string, Eigen::VectorXf> table)
        : dim_(dim), table_(std::move(table)) {}
    std::string id() const override { return "table"; }
    Eigen::Index dimension() const override { return dim_; }
    Eigen::VectorXf embed(std::string_view text) override {
        ++calls;
        const auto it = table_.find(std::string(text));
        if (it == table_.end()) return Eigen::VectorXf::Zero(dim_);
        return it->second;
    }
    int calls = 0;

private:
    Eigen::Index dim_;
    std::map<std::string, Eigen::VectorXf> table_;
};

class ShortEmbedder : public Embedder {
public:
    std::string id() const override { return "short"; }
    Eigen::Index dimension() const override { return 4; }
    Eigen::VectorXf embed(std::string_view) override { return Eigen::VectorXf::Ones(3); }
};

Eigen::VectorXf vec(std::initializer_list<float> v) {
    Eigen::VectorXf out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (float x : v) out(i++) = x;
    return out;
}

LlmHandle mock_handle() {
    LlmHandle h;
    h.provider_id = "mock";
    h.model_id = "mock-model";
    return h;
}

GatewayOptions fast() {
    GatewayOptions o;
    o.backoff_base = std::chrono::milliseconds(0);
    return o;
}

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("vh_kb_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

KnowledgeItem summarized(std::string id, std::string report, std::string code) {
    KnowledgeItem item;
    item.id = std::move(id);
    item.report_text = std::move(report);
    item.vulnerable_code = std::move(code);
    item.functionality = "Swap tokens for " + item.id;
    item.key_concept = "KeyConcept: root cause of " + item.id;
    return item;
}

}  // namespace

TEST(Ingest, CreatesUnsummarizedAuditItem) {
    KnowledgeBase kb;
    const auto& item = ingest_report(kb, "Duplicate entries in path cause fee loss",
                                     "function _routerSwapFromPath(address[] memory path) internal {}",
                                     Language::solidity);
    EXPECT_EQ(item.source, KnowledgeSource::audit_report);
    EXPECT_TRUE(item.functionality.empty());
    EXPECT_TRUE(item.key_concept.empty());
    EXPECT_EQ(item.code_embedding.size(), 0);
    EXPECT_EQ(kb.items().size(), 1u);
}

TEST(Ingest, RejectsEmptyReport) {
    KnowledgeBase kb;
    try {
        ingest_report(kb, "", "code", Language::solidity);
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::validation);
    }
    EXPECT_THROW(ingest_report(kb, "  \n", "code", Language::solidity), HarnessError);
}

TEST(Ingest, PersistenceRoundTrip) {
    const auto dir = temp_dir("persist");
    KnowledgeBase kb;
    const std::string report = "Unchecked return value of transfer\nwith \"quotes\" and unicode \xc3\xa9";
    const auto id = ingest_report(kb, report, "contract X {}", Language::solidity).id;
    ingest_report(kb, report, "contract X {}", Language::solidity);  // idempotent
    EXPECT_EQ(kb.items().size(), 1u);
    kb.save(dir);
    const auto loaded = KnowledgeBase::load(dir);
    ASSERT_NE(loaded.find(id), nullptr);
    EXPECT_EQ(loaded.find(id)->report_text, report);
    fs::remove_all(dir);
}

TEST(Summarize, FillsBothFieldsFromScriptedAnswers) {
    KnowledgeBase kb;
    auto item = ingest_report(kb, "Swap ratio loses precision for 6-decimal tokens",
                              "function getSwapRatio(uint256 amountIn) public view returns (uint256) {}",
                              Language::solidity);
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->reply(functionality_prompt(item.report_text, item.vulnerable_code).fingerprint,
                "Functionality: Calculate the swap ratio between two tokens of a liquidity pair.");
    mock->reply(root_cause_prompt(item.report_text, item.vulnerable_code).fingerprint,
                "KeyConcept: incorrect handling of decimal precision");
    gw.register_backend("mock", mock);

    const auto out = summarize_item(item, gw, mock_handle());
    EXPECT_EQ(out.functionality, "Calculate the swap ratio between two tokens of a liquidity pair.");
    EXPECT_EQ(out.key_concept, "KeyConcept: incorrect handling of decimal precision");
    EXPECT_EQ(mock->call_count(), 2);

    const auto again = summarize_item(out, gw, mock_handle());
    EXPECT_EQ(mock->call_count(), 2);
    EXPECT_EQ(again.key_concept, out.key_concept);
}

TEST(Summarize, PromptsCarryTemplatesVerbatim) {
    const auto f = functionality_prompt("report body", "code body");
    EXPECT_EQ(f.user_text.rfind("Given the following vulnerability description, following the task:\n", 0), 0u);
    EXPECT_NE(f.user_text.find("report body"), std::string::npos);
    const auto r = root_cause_prompt("report body", "code body");
    EXPECT_NE(r.user_text.find("3. Use the format: KeyConcept:xxxx, placing the foundational"), std::string::npos);
    EXPECT_NE(r.user_text.find("code body"), std::string::npos);
}

TEST(Summarize, MissingMarkerIsMalformedAndLeavesItem) {
    KnowledgeBase kb;
    const auto item = ingest_report(kb, "Reentrancy in withdraw", "function withdraw() {}", Language::solidity);
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle& b) {
        if (b.user_text.find("KeyConcept:xxxx") != std::string::npos)
            return MockBackend::text("The root cause is reentrancy.");
        return MockBackend::text("Functionality: Withdraw funds.");
    });
    gw.register_backend("mock", mock);
    try {
        summarize_item(item, gw, mock_handle());
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::malformed_summary);
    }
    EXPECT_TRUE(kb.find(item.id)->functionality.empty());
    EXPECT_TRUE(kb.find(item.id)->key_concept.empty());
}

TEST(Summarize, KeyConceptNamingCodeIdentifiersIsRejected) {
    const std::string code = "function _routerSwapFromPath(address[] memory path) internal { feeTotal += 1; }";
    const auto ids = distinctive_identifiers(code, Language::solidity);
    EXPECT_NE(std::find(ids.begin(), ids.end(), "_routerSwapFromPath"), ids.end());
    EXPECT_NE(std::find(ids.begin(), ids.end(), "feeTotal"), ids.end());
    EXPECT_EQ(std::find(ids.begin(), ids.end(), "path"), ids.end());

    EXPECT_THROW(parse_key_concept("KeyConcept: _routerSwapFromPath skips duplicates", code, Language::solidity),
                 HarnessError);
    EXPECT_EQ(parse_key_concept("Sure.\nKeyConcept: [missing duplicate check on an input path]", code,
                                Language::solidity),
              "KeyConcept: missing duplicate check on an input path");
    EXPECT_THROW(parse_key_concept("KeyConcept:   ", code, Language::solidity), HarnessError);
}

TEST(Embed, OneVectorPerItemWithDeclaredDimension) {
    std::vector<KnowledgeItem> items = {summarized("a", "r1", "c1"), summarized("b", "r2", "c2"),
                                        summarized("c", "r3", "c3")};
    HashEmbedder embedder(4);
    const auto store = embed_items(items, embedder, EmbedMode::code);
    EXPECT_EQ(store.size(), 3u);
    EXPECT_EQ(store.dimension(), 4);
    for (size_t i = 0; i < store.size(); ++i) EXPECT_EQ(store.row(i).size(), 4);
}

TEST(Embed, FunctionalityModeNeedsSummaries) {
    std::vector<KnowledgeItem> items = {summarized("a", "r", "c")};
    items.push_back(items[0]);
    items[1].id = "b";
    items[1].functionality.clear();
    items[1].key_concept.clear();
    HashEmbedder embedder(8);
    try {
        embed_items(items, embedder, EmbedMode::functionality);
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::precondition);
        EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
    }
}

TEST(Embed, WrongLengthNamesTheItem) {
    std::vector<KnowledgeItem> items = {summarized("kb-offender", "r", "c")};
    ShortEmbedder embedder;
    try {
        embed_items(items, embedder, EmbedMode::code);
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
        EXPECT_NE(std::string(e.what()).find("kb-offender"), std::string::npos);
    }
}

TEST(Embed, ReembeddingReplacesEntries) {
    KnowledgeBase kb;
    for (int i = 0; i < 5; ++i) kb.upsert(summarized("k" + std::to_string(i), "r" + std::to_string(i), "c"));
    HashEmbedder embedder(16);
    kb.embed(embedder, EmbedMode::code);
    kb.embed(embedder, EmbedMode::code);
    const auto& store = kb.store(EmbedMode::code);
    // brute-force: every item id appears exactly once among store rows
    for (const auto& item : kb.items())
        EXPECT_EQ(std::count(store.ids().begin(), store.ids().end(), item.id), 1);
    EXPECT_EQ(store.size(), kb.items().size());
}

TEST(Embed, RawModeEmbedsReportThenCode) {
    const auto item = summarized("a", "REPORT", "CODE");
    EXPECT_EQ(embedding_text(item, EmbedMode::code), "REPORT\nCODE");
    EXPECT_EQ(embedding_text(item, EmbedMode::functionality), item.functionality);
}

TEST(HashEmbedderTest, DeterministicAndUnitLength) {
    HashEmbedder a(64), b(64);
    const auto va = a.embed("transfer tokens to the owner after checking balance");
    EXPECT_TRUE(va.isApprox(b.embed("transfer tokens to the owner after checking balance")));
    EXPECT_NEAR(va.norm(), 1.0f, 1e-5f);
    EXPECT_EQ(a.embed("").norm(), 0.0f);
    // shared vocabulary scores higher than disjoint vocabulary
    const auto near = a.embed("transfer tokens to the owner");
    const auto far = a.embed("parse json header field");
    EXPECT_GT(va.dot(near), va.dot(far));
}

TEST(Retrieve, SelfMatchRanksFirst) {
    VectorStore store(3, EmbedMode::code);
    store.upsert("x", vec({1, 0, 0}));
    store.upsert("y", vec({0, 1, 0}));
    store.upsert("z", vec({0, 0, 1}));
    const auto out = retrieve(vec({0, 1, 0}), store, 1);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].item_id, "y");
    EXPECT_EQ(out[0].rank, 1);
}

TEST(Retrieve, WorkedExample) {
    VectorStore store(2, EmbedMode::code);
    store.upsert("a", vec({1, 0}));
    store.upsert("b", vec({0, 1}));
    store.upsert("c", vec({0.6f, 0.6f}));
    const auto out = retrieve(vec({1, 0}), store, 2);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].item_id, "a");
    EXPECT_FLOAT_EQ(out[0].score, 1.0f);
    EXPECT_EQ(out[1].item_id, "c");
    EXPECT_FLOAT_EQ(out[1].score, 0.6f);
}

TEST(Retrieve, ClampsToStoreSize) {
    VectorStore store(2, EmbedMode::code);
    store.upsert("a", vec({1, 0}));
    store.upsert("b", vec({0, 1}));
    EXPECT_EQ(retrieve(vec({1, 1}), store, 3).size(), 2u);
}

TEST(Retrieve, DimensionAndKErrors) {
    VectorStore store(2, EmbedMode::code);
    store.upsert("a", vec({1, 0}));
    try {
        retrieve(vec({1, 0, 0}), store, 1);
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
    }
    EXPECT_THROW(retrieve(vec({1, 0}), store, 0), HarnessError);
    EXPECT_THROW(store.upsert("b", vec({1})), HarnessError);
}

TEST(Retrieve, TiesBreakByLexicographicId) {
    VectorStore store(2, EmbedMode::code);
    for (const char* id : {"delta", "alpha", "charlie", "bravo"}) store.upsert(id, vec({1, 0}));
    const auto out = retrieve(vec({2, 0}), store, 4);
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[0].item_id, "alpha");
    EXPECT_EQ(out[1].item_id, "bravo");
    EXPECT_EQ(out[2].item_id, "charlie");
    EXPECT_EQ(out[3].item_id, "delta");
}

TEST(Retrieve, ExactSearchMatchesBruteForceOnRandomStores) {
    std::mt19937 rng(20240901);
    for (int trial = 0; trial < 300; ++trial) {
        const int dim = std::uniform_int_distribution<int>(1, 8)(rng);
        const int n = std::uniform_int_distribution<int>(1, 64)(rng);
        const size_t k = std::uniform_int_distribution<size_t>(1, 70)(rng);
        // small integer coordinates make exact ties common and dot products exact in float
        std::uniform_int_distribution<int> coord(-2, 2);
        VectorStore store(dim, EmbedMode::code);
        std::vector<std::pair<std::string, std::vector<int>>> rows;
        for (int i = 0; i < n; ++i) {
            std::vector<int> v(dim);
            Eigen::VectorXf ev(dim);
            for (int d = 0; d < dim; ++d) ev(d) = static_cast<float>(v[d] = coord(rng));
            std::string id = "id" + std::to_string(std::uniform_int_distribution<int>(0, 999)(rng));
            store.upsert(id, ev);
            auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.first == id; });
            if (it != rows.end()) it->second = v;
            else rows.emplace_back(id, v);
        }
        std::vector<int> q(dim);
        Eigen::VectorXf eq(dim);
        for (int d = 0; d < dim; ++d) eq(d) = static_cast<float>(q[d] = coord(rng));

        std::vector<std::pair<long, std::string>> expected;
        for (const auto& [id, v] : rows) {
            long dot = 0;
            for (int d = 0; d < dim; ++d) dot += static_cast<long>(v[d]) * q[d];
            expected.emplace_back(-dot, id);
        }
        std::sort(expected.begin(), expected.end());
        const auto got = retrieve(eq, store, k);
        ASSERT_EQ(got.size(), std::min(k, expected.size()));
        for (size_t r = 0; r < got.size(); ++r) {
            EXPECT_EQ(got[r].item_id, expected[r].second) << "trial " << trial << " rank " << r + 1;
            EXPECT_EQ(got[r].score, static_cast<float>(-expected[r].first));
            EXPECT_EQ(got[r].rank, static_cast<int>(r + 1));
            if (r) EXPECT_LE(got[r].score, got[r - 1].score);
        }
    }
}

TEST(Retrieve, DoubleScalarStoreAgreesWithFloat) {
    BasicVectorStore<double> d(2, EmbedMode::code);
    d.upsert("a", Eigen::Vector2d(1, 0));
    d.upsert("c", Eigen::Vector2d(0.6, 0.6));
    const auto top = d.top_k(Eigen::Vector2d(1, 0), 1);
    EXPECT_EQ(top[0].id, "a");
    EXPECT_DOUBLE_EQ(top[0].score, 1.0);
}

namespace {

struct CaseFixture {
    KnowledgeBase kb;
    TargetCase target;

    CaseFixture() {
        for (int i = 0; i < 5; ++i) {
            auto item = summarized("k" + std::to_string(i), "report " + std::to_string(i),
                                   "vulnerable code " + std::to_string(i));
            kb.upsert(item);
        }
        target.id = "case-1";
        target.code = "function transfer(address to) external {}";
        target.ground_truth_vulnerable = false;
    }
};

}  // namespace

TEST(RetrieveForCase, DefaultsToTopThree) {
    CaseFixture f;
    HashEmbedder embedder(32);
    f.kb.embed(embedder, EmbedMode::code);
    const auto out = retrieve_for_case(f.target, KnowledgeMode::raw, f.kb, embedder);
    ASSERT_EQ(out.size(), kDefaultTopK);
    EXPECT_EQ(kDefaultTopK, 3u);
    for (size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].rank, static_cast<int>(i + 1));
}

TEST(RetrieveForCase, RawPayloadIsReportOnly) {
    CaseFixture f;
    HashEmbedder embedder(32);
    f.kb.embed(embedder, EmbedMode::code);
    for (const auto& r : retrieve_for_case(f.target, KnowledgeMode::raw, f.kb, embedder)) {
        const auto* item = f.kb.find(r.item_id);
        EXPECT_EQ(r.mode, KnowledgeMode::raw);
        EXPECT_EQ(r.payload, item->report_text);
        EXPECT_EQ(r.payload.find(item->vulnerable_code), std::string::npos);
    }
}

TEST(RetrieveForCase, SummarizedUsesFunctionalityStoreAndKeyConcepts) {
    CaseFixture f;
    std::map<std::string, Eigen::VectorXf> table;
    for (int i = 0; i < 5; ++i)
        table["Swap tokens for k" + std::to_string(i)] = vec({static_cast<float>(i), 1.0f});
    table["Move funds between accounts"] = vec({1.0f, 0.0f});
    TableEmbedder embedder(2, table);
    f.kb.embed(embedder, EmbedMode::functionality);

    EXPECT_THROW(retrieve_for_case(f.target, KnowledgeMode::summarized, f.kb, embedder), HarnessError);
    f.target.functionality_summary = "Move funds between accounts";
    const auto out = retrieve_for_case(f.target, KnowledgeMode::summarized, f.kb, embedder);
    ASSERT_EQ(out.size(), 3u);
    // scores are i for item k<i>: k4, k3, k2
    EXPECT_EQ(out[0].item_id, "k4");
    EXPECT_EQ(out[1].item_id, "k3");
    EXPECT_EQ(out[2].item_id, "k2");
    for (const auto& r : out) {
        EXPECT_EQ(r.mode, KnowledgeMode::summarized);
        EXPECT_EQ(r.payload.rfind("KeyConcept", 0), 0u);
    }
}

TEST(RetrieveForCase, DeterministicAcrossCalls) {
    CaseFixture f;
    HashEmbedder embedder(32);
    f.kb.embed(embedder, EmbedMode::code);
    const auto a = retrieve_for_case(f.target, KnowledgeMode::raw, f.kb, embedder);
    const auto b = retrieve_for_case(f.target, KnowledgeMode::raw, f.kb, embedder);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].item_id, b[i].item_id);
        EXPECT_EQ(a[i].score, b[i].score);
    }
}

TEST(RetrieveForCase, CaseSummaryComputedOnce) {
    CaseFixture f;
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle&) { return MockBackend::text("Functionality: Move funds."); });
    gw.register_backend("mock", mock);
    ensure_case_summary(f.target, gw, mock_handle());
    ensure_case_summary(f.target, gw, mock_handle());
    EXPECT_EQ(*f.target.functionality_summary, "Move funds.");
    EXPECT_EQ(mock->call_count(), 1);
}

TEST(RetrieveForCase, ReloadedStoreGivesSameResults) {
    const auto dir = temp_dir("reload");
    CaseFixture f;
    HashEmbedder embedder(32);
    f.kb.embed(embedder, EmbedMode::code);
    f.kb.embed(embedder, EmbedMode::functionality);
    f.kb.save(dir);
    const auto loaded = KnowledgeBase::load(dir);
    ASSERT_TRUE(loaded.has_store(EmbedMode::functionality));
    const auto a = retrieve_for_case(f.target, KnowledgeMode::raw, f.kb, embedder);
    const auto b = retrieve_for_case(f.target, KnowledgeMode::raw, loaded, embedder);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].item_id, b[i].item_id);
        EXPECT_EQ(a[i].score, b[i].score);
    }
    EXPECT_EQ(loaded.find("k0")->code_embedding.size(), 32);
    fs::remove_all(dir);
}
