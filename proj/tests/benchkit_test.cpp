#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "sanitize_mock.hpp"
#include "vulnharness/benchkit.hpp"
#include "vulnharness/io.hpp"
#include "vulnharness/lexer.hpp"
#include "vulnharness/templates.hpp"

using namespace vulnharness;

namespace {

GatewayOptions fast() {
    GatewayOptions o;
    o.backoff_base = std::chrono::milliseconds(0);
    return o;
}

LlmHandle handle() {
    LlmHandle h;
    h.provider_id = "mock";
    h.model_id = "mock-writer";
    return h;
}

std::string blocks(int n) {
    std::string out = "Here you go.\n";
    for (int i = 0; i < n; ++i)
        out += "```java\nclass Snippet" + std::to_string(i) + " { int f(int a) { return a + " + std::to_string(i) +
               "; } }\n```\n";
    return out;
}

// Generation prompts start with the CWE line, report prompts with the code fence.
MockBackend::Script synthesis_responder(const PromptBundle& b, int blocks_per_answer) {
    if (b.user_text.rfind("CWE-", 0) == 0) {
        static const std::regex want(R"(generate (\d+) different)");
        std::smatch m;
        std::regex_search(b.user_text, m, want);
        const int n = blocks_per_answer > 0 ? blocks_per_answer : std::stoi(m[1].str());
        return MockBackend::text(blocks(n));
    }
    return MockBackend::text(
        "1) Vulnerability Description: unchecked arithmetic.\n2) Vulnerable Code: see above.\n"
        "3) Root Cause: no bound.\n4) Impact: wrong totals.\n5) Mitigation: check bounds.");
}

std::vector<CweEntry> entries(int count, Language lang) {
    std::vector<CweEntry> out;
    for (int i = 1; i <= count; ++i) out.push_back({"CWE-" + std::to_string(100 + i), lang, "Weakness number " + std::to_string(i)});
    return out;
}

std::vector<TargetCase> sanitize_fixtures() { return sanitize_mock::fixtures(VH_FIXTURE_DIR); }

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

// ---- synthesis -------------------------------------------------------------------------

TEST(CweEntryTest, IdFormat) {
    EXPECT_NO_THROW((CweEntry{"CWE-190", Language::java, "Integer overflow"}.validate()));
    for (const char* bad : {"CWE-", "cwe-190", "CWE-19a", "190", " CWE-190"})
        EXPECT_THROW((CweEntry{bad, Language::java, "x"}.validate()), HarnessError) << bad;
    EXPECT_THROW((CweEntry{"CWE-1", Language::java, "  "}.validate()), HarnessError);
}

TEST(Synthesis, GenerationPromptKeepsTemplate) {
    const CweEntry e{"CWE-190", Language::java, "Integer Overflow or Wraparound"};
    const auto b = code_generation_prompt(e);
    std::string expected(templates::kGenerateVulnerableCode);
    expected.replace(expected.find("[%CWE_INFO%]"), 12, "CWE-190: Integer Overflow or Wraparound");
    expected.replace(expected.find("[%LANGUAGE%]"), 12, "Java");
    EXPECT_EQ(b.user_text, expected);
    EXPECT_NE(code_generation_prompt(e, 4).user_text.find("generate 4 different"), std::string::npos);
    EXPECT_THROW(code_generation_prompt(e, 0), HarnessError);
}

TEST(Synthesis, ReportPromptCarriesCode) {
    const CweEntry e{"CWE-787", Language::cpp, "Out-of-bounds Write"};
    const auto b = report_generation_prompt(e, "int f() { return 0; }");
    EXPECT_EQ(b.user_text.rfind("```cpp\nint f() { return 0; }\n```\n\nThe above code has CWE-787 vulnerability.", 0), 0u);
}

TEST(Synthesis, FencedBlocks) {
    EXPECT_EQ(extract_fenced_blocks("a\n```java\nx;\n```\nb\n```\ny;\nz;\n```"),
              (std::vector<std::string>{"x;\n", "y;\nz;\n"}));
    EXPECT_EQ(extract_fenced_blocks("```\n\n```\n```\nopen"), std::vector<std::string>{});
}

TEST(Synthesis, TenSnippetsGiveTenItems) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle& b) { return synthesis_responder(b, 0); });
    gw.register_backend("mock", mock);
    const auto r = synthesize_knowledge({"CWE-190", Language::java, "Integer overflow"}, gw, handle());
    EXPECT_EQ(r.items.size(), 10u);
    EXPECT_EQ(r.tally.skipped(), 0);
    std::set<std::string> ids;
    for (const auto& item : r.items) {
        EXPECT_EQ(item.source, KnowledgeSource::cwe_synthesized);
        EXPECT_FALSE(item.summarized());
        EXPECT_NE(item.report_text.find("Mitigation"), std::string::npos);
        ids.insert(item.id);
    }
    EXPECT_EQ(ids.size(), 10u);
    EXPECT_EQ(mock->call_count(), 11);
}

TEST(Synthesis, ShortfallIsTallied) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle& b) { return synthesis_responder(b, 2); });
    gw.register_backend("mock", mock);
    const auto r = synthesize_knowledge({"CWE-190", Language::java, "Integer overflow"}, gw, handle(), 10);
    EXPECT_EQ(r.items.size(), 2u);
    EXPECT_EQ(r.tally.missing_snippets, 8);
    EXPECT_EQ(r.tally.produced + r.tally.skipped(), r.tally.requested);
}

TEST(Synthesis, ReportWithoutDescriptionIsSkipped) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle& b) {
        if (b.user_text.rfind("CWE-", 0) == 0) return MockBackend::text(blocks(3));
        return MockBackend::text(b.user_text.find("Snippet1") != std::string::npos ? "I cannot help." : "Vulnerability Description: x");
    });
    gw.register_backend("mock", mock);
    const auto r = synthesize_knowledge({"CWE-190", Language::java, "Integer overflow"}, gw, handle(), 3);
    EXPECT_EQ(r.items.size(), 2u);
    EXPECT_EQ(r.tally.bad_reports, 1);
}

TEST(Synthesis, KnowledgeSetSizes) {
    for (const auto& [count, lang, expected] :
         {std::tuple{77, Language::java, 770u}, std::tuple{86, Language::cpp, 860u}}) {
        LlmGateway gw(fast());
        auto mock = std::make_shared<MockBackend>();
        mock->set_fallback([](const PromptBundle& b) { return synthesis_responder(b, 0); });
        gw.register_backend("mock", mock, 4);
        const auto r = synthesize_all(entries(count, lang), gw, handle(), 10, 4);
        EXPECT_EQ(r.items.size(), expected);
        EXPECT_EQ(r.tally.produced, static_cast<int>(expected));
        EXPECT_EQ(r.tally.skipped(), 0);
        for (const auto& item : r.items) EXPECT_EQ(item.language, lang);
    }
}

TEST(Synthesis, CountConservationWithFailures) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle& b) {
        // entry-dependent shortfall: CWE-10k yields k % 4 blocks
        if (b.user_text.rfind("CWE-", 0) == 0) return MockBackend::text(blocks(std::stoi(b.user_text.substr(4, 3)) % 4));
        return synthesis_responder(b, 0);
    });
    gw.register_backend("mock", mock);
    const auto es = entries(9, Language::java);
    const auto r = synthesize_all(es, gw, handle(), 3, 3);
    int expected = 0;
    for (const auto& e : es) expected += std::min(3, std::stoi(e.cwe_id.substr(4)) % 4);
    EXPECT_EQ(static_cast<int>(r.items.size()), expected);
    EXPECT_EQ(r.tally.produced + r.tally.skipped(), r.tally.requested);
}

// ---- declared identifiers --------------------------------------------------------------

TEST(DeclaredIdentifiers, HandEnumeratedSets) {
    const std::map<std::string, std::set<std::string>> expected = {
        {"san-01", {"getSwapRatio", "amountIn", "reserveIn"}},
        {"san-02", {"withdraw", "amount", "ok"}},
        {"san-03", {"shares", "totalShares", "deposit", "assets", "minted", "totalAssets"}},
        {"san-04", {"setOwner", "newOwner"}},
        {"san-05", {"sumAll", "values", "total", "i"}},
        {"san-06", {"quote", "amountA", "reserveA", "reserveB", "amountB"}},
        {"san-07", {"_zap", "tokenIn", "amountIn", "half", "rest", "price0", "price1"}},
        {"san-08", {"answer"}},
        {"san-09", {"readLength", "buffer", "offset", "length"}},
        {"san-10", {"buildQuery", "userName", "query"}},
        {"san-11", {"count", "increment", "current"}},
        {"san-12", {"splitWords", "text", "words", "part"}},
        {"san-13", {"factorial", "n", "acc", "k"}},
        {"san-14", {"checkPassword", "input", "stored"}},
        {"san-15", {"copy_name", "dst", "src", "cap"}},
        {"san-16", {"src", "len"}},
        {"san-17", {"clamp_value", "value", "low", "high"}},
        {"san-18", {"take_payload", "node", "payload"}},
        {"san-19", {"total_size", "count", "item_size", "bytes"}},
        {"san-20", {"parse_packet", "raw", "len", "header", "check", "x"}},
    };
    const auto cases = sanitize_fixtures();
    ASSERT_EQ(cases.size(), 20u);
    for (const auto& c : cases) EXPECT_EQ(as_set(declared_identifiers(c.code, c.language)), expected.at(c.id)) << c.id;
}

// ---- sanitizer -------------------------------------------------------------------------

TEST(Sanitize, AllFixturesKeepShapeAndLoseOriginalNames) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback(sanitize_mock::respond);
    gw.register_backend("mock", mock);
    for (const auto& c : sanitize_fixtures()) {
        const auto r = sanitize_case(c, gw, handle());
        ASSERT_TRUE(r.accepted()) << c.id << ": " << *r.error;
        EXPECT_EQ(r.map.renames.size(), declared_identifiers(c.code, c.language).size()) << c.id;
        EXPECT_EQ(anonymized_shape(r.sanitized.code, c.language), anonymized_shape(c.code, c.language)) << c.id;
        const auto after = as_set(all_identifiers(r.sanitized.code, c.language));
        for (const auto& [from, to] : r.map.renames) {
            EXPECT_FALSE(after.count(from)) << c.id << " still has " << from;
            EXPECT_TRUE(after.count(to)) << c.id;
        }
        EXPECT_EQ(r.sanitized.ground_truth_vulnerable, c.ground_truth_vulnerable);
        EXPECT_EQ(r.sanitized.ground_truth_type, c.ground_truth_type);
        const bool has_comment = c.code.find("//") != std::string::npos || c.code.find("/*") != std::string::npos;
        EXPECT_EQ(r.map.comments_rewritten, has_comment) << c.id;
        if (has_comment) EXPECT_NE(r.sanitized.code.find("reworded note 0"), std::string::npos) << c.id;
    }
}

TEST(Sanitize, FunctionRenamedAtDefinitionAndCallSites) {
    TargetCase c;
    c.id = "ratio";
    c.language = Language::solidity;
    c.code =
        "function getSwapRatio(uint256 x) public pure returns (uint256) {\n    return x * 1e18 / 1e18;\n}\n"
        "function quoteAll(uint256 a, uint256 b) public pure returns (uint256) {\n"
        "    return getSwapRatio(a) + getSwapRatio(b);\n}\n";
    c.function_name = "getSwapRatio";
    const auto r = apply_sanitization(c, {{"getSwapRatio", "computeRate"}}, std::nullopt);
    ASSERT_TRUE(r.accepted()) << *r.error;
    EXPECT_EQ(r.map.renames.size(), 1u);
    EXPECT_EQ(r.sanitized.code.find("getSwapRatio"), std::string::npos);
    size_t uses = 0;
    for (size_t p = 0; (p = r.sanitized.code.find("computeRate", p)) != std::string::npos; ++p) ++uses;
    EXPECT_EQ(uses, 3u);
    EXPECT_EQ(anonymized_shape(r.sanitized.code, c.language), anonymized_shape(c.code, c.language));
    EXPECT_EQ(*r.sanitized.function_name, "computeRate");
}

TEST(Sanitize, NothingEligibleIsIdentity) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    gw.register_backend("mock", mock);
    TargetCase c;
    c.id = "lit";
    c.language = Language::cpp;
    c.code = "return 1;\n";
    const auto r = sanitize_case(c, gw, handle());
    EXPECT_TRUE(r.accepted());
    EXPECT_TRUE(r.map.renames.empty());
    EXPECT_EQ(r.sanitized.code, c.code);
    EXPECT_EQ(mock->call_count(), 0);
}

TEST(Sanitize, ForcedCollisionsAreRejected) {
    const auto cases = sanitize_fixtures();
    const auto& c = cases[0];  // getSwapRatio(amountIn, reserveIn)
    const std::vector<std::map<std::string, std::string>> bad = {
        {{"amountIn", "reserveIn"}},                      // collides with an existing name
        {{"amountIn", "value"}, {"reserveIn", "value"}},  // not injective
        {{"amountIn", "return"}},                         // keyword
        {{"amountIn", "1abc"}},                           // not an identifier
        {{"amountIn", "msg"}},                            // builtin
    };
    for (const auto& renames : bad) {
        const auto r = apply_sanitization(c, renames, std::nullopt);
        EXPECT_FALSE(r.accepted()) << renames.begin()->second;
        EXPECT_EQ(r.sanitized.code, c.code);
    }
}

TEST(Sanitize, CollisionProposedByModelIsRejected) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle&) {
        return MockBackend::text(R"({"renames": {"withdraw": "ok"}, "comments": []})");
    });
    gw.register_backend("mock", mock);
    const auto c = sanitize_fixtures()[1];
    const auto r = sanitize_case(c, gw, handle());
    EXPECT_FALSE(r.accepted());
    EXPECT_NE(r.error->find("collides"), std::string::npos);
    EXPECT_EQ(r.sanitized.code, c.code);
}

TEST(Sanitize, ForeignNamesAreDropped) {
    const auto c = sanitize_fixtures()[1];  // withdraw uses balances and msg
    const auto r = apply_sanitization(c, {{"balances", "ledger"}, {"msg", "m"}, {"amount", "qty"}}, std::nullopt);
    ASSERT_TRUE(r.accepted()) << *r.error;
    EXPECT_EQ(r.map.renames, (std::map<std::string, std::string>{{"amount", "qty"}}));
    EXPECT_EQ(as_set(r.dropped), (std::set<std::string>{"balances", "msg"}));
    EXPECT_NE(r.sanitized.code.find("balances[msg.sender]"), std::string::npos);
}

TEST(Sanitize, CommentCannotBreakOut) {
    const auto c = sanitize_fixtures()[17];  // block comment
    const auto r = apply_sanitization(c, {{"node", "item"}}, std::vector<std::string>{"ends */ early about node"});
    ASSERT_TRUE(r.accepted()) << *r.error;
    EXPECT_TRUE(r.map.comments_rewritten);
    EXPECT_NE(r.sanitized.code.find("/* ends * / early about item */"), std::string::npos);
}

TEST(Sanitize, CommentCountMismatchKeepsOriginalComments) {
    const auto c = sanitize_fixtures()[0];
    const auto r = apply_sanitization(c, {{"amountIn", "a0"}}, std::vector<std::string>{"one", "two"});
    ASSERT_TRUE(r.accepted());
    EXPECT_FALSE(r.map.comments_rewritten);
    EXPECT_NE(r.sanitized.code.find("// ratio scaled to 18 decimals"), std::string::npos);
}

TEST(Sanitize, UnparseableCaseIsPrecondition) {
    LlmGateway gw(fast());
    gw.register_backend("mock", std::make_shared<MockBackend>());
    TargetCase c;
    c.id = "broken";
    c.language = Language::java;
    c.code = "void f() { if (x) { }\n";
    try {
        sanitize_case(c, gw, handle());
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::precondition);
    }
}

TEST(Sanitize, ReplyWithoutMapIsRejected) {
    LlmGateway gw(fast());
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const PromptBundle&) { return MockBackend::text("Sure, here is the code."); });
    gw.register_backend("mock", mock);
    const auto r = sanitize_case(sanitize_fixtures()[3], gw, handle());
    EXPECT_FALSE(r.accepted());
}

TEST(Shape, IdentifiersAreErasedButStructureIsNot) {
    const auto a = anonymized_shape("function f(uint a) { a = a + 1; }", Language::solidity);
    const auto b = anonymized_shape("function g(uint q) { q = q + 1; }", Language::solidity);
    const auto c = anonymized_shape("function g(uint q) { q = q - 1; }", Language::solidity);
    const auto d = anonymized_shape("function g(uint q) { q = q + 1; q; }", Language::solidity);
    EXPECT_EQ(a, b);
    EXPECT_FALSE(a == c);
    EXPECT_FALSE(a == d);
    EXPECT_THROW(anonymized_shape("f(", Language::cpp), HarnessError);
}

TEST(DeclaredIdentifiers, BuiltinNameUsedAsMemberStaysPut) {
    const auto ids = declared_identifiers("int f(int[] a) { int length = a.length; return length; }", Language::java);
    EXPECT_EQ(as_set(ids), (std::set<std::string>{"f", "a"}));
    EXPECT_EQ(as_set(declared_identifiers("int g(int length) { return length; }", Language::java)),
              (std::set<std::string>{"g", "length"}));
}
