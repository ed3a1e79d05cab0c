#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>

#include "e2e_fixture.hpp"

using namespace vulnharness;
namespace fs = std::filesystem;

namespace {

std::vector<TargetCase> synthetic_cases(size_t n) {
    std::vector<TargetCase> out;
    for (size_t i = 0; i < n; ++i) {
        TargetCase c;
        c.id = "case-" + std::to_string(i);
        c.code = "function f() {}";
        out.push_back(c);
    }
    return out;
}

ScenarioMatrix full_matrix(size_t n) {
    ScenarioMatrix m;
    m.cases = synthetic_cases(n);
    m.knowledge_modes = {KnowledgeMode::none, KnowledgeMode::raw, KnowledgeMode::summarized};
    m.contexts = {true, false};
    m.schemes = {SchemeKind::raw_scheme, SchemeKind::cot};
    return m;
}

ExecuteOptions opts(const fs::path& dir, int workers = 4) {
    ExecuteOptions o;
    o.out_dir = dir;
    o.workers = workers;
    o.seed = 7;
    return o;
}

// Counts every backend request by (model, fingerprint, seed, round).
class CountingBackend : public ChatBackend {
public:
    explicit CountingBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}
    BackendReply chat(const ChatRequest& r) override {
        {
            std::lock_guard lock(mutex_);
            ++seen[{r.handle.model_id, r.bundle.fingerprint, r.handle.seed.value_or(-1), r.round}];
        }
        return inner_->chat(r);
    }
    std::map<std::tuple<std::string, std::string, int64_t, int>, int> seen;

private:
    std::shared_ptr<ChatBackend> inner_;
    std::mutex mutex_;
};

}  // namespace

// ---- plan ------------------------------------------------------------------------------

TEST(Plan, FullMatrixCounts) {
    const auto m = full_matrix(294);
    EXPECT_EQ(m.scenario_count(), 3528u);
    EXPECT_EQ(m.trial_count(), 8232u);
    const auto specs = plan(m);
    EXPECT_EQ(specs.size(), 8232u);
    std::set<std::tuple<size_t, std::string, int>> cells;
    size_t conversations = 0;
    for (const auto& s : specs) {
        cells.insert({s.case_index, s.cell.label(), 0});
        conversations += static_cast<size_t>(s.repeats);
    }
    EXPECT_EQ(cells.size(), 3528u);
    EXPECT_EQ(conversations, m.execution_count());
    EXPECT_EQ(conversations, 294u * 9 * 2 * 2);
}

TEST(Plan, SevenTrialsPerCell) {
    const auto specs = plan(full_matrix(1));
    std::map<std::string, std::vector<int>> ranks;
    for (const auto& s : specs) ranks[s.cell.label()].push_back(s.rank);
    ASSERT_EQ(ranks.size(), 12u);
    for (const auto& [label, r] : ranks) {
        if (label.rfind("none", 0) == 0) {
            EXPECT_EQ(r, std::vector<int>{0}) << label;
        } else {
            EXPECT_EQ(r, (std::vector<int>{1, 2, 3})) << label;
        }
    }
    for (const auto& s : specs) EXPECT_EQ(s.repeats, s.cell.knowledge_mode == KnowledgeMode::none ? 3 : 1);
}

TEST(Plan, SingleTrial) {
    ScenarioMatrix m;
    m.cases = synthetic_cases(1);
    m.knowledge_modes = {KnowledgeMode::none};
    m.contexts = {false};
    m.schemes = {SchemeKind::raw_scheme};
    m.none_repeats = 1;
    EXPECT_EQ(plan(m).size(), 1u);
    EXPECT_EQ(m.execution_count(), 1u);
}

TEST(Plan, DeterministicOrder) {
    auto m = full_matrix(5);
    const auto a = plan(m);
    const auto b = plan(m);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].case_id, b[i].case_id);
        EXPECT_EQ(a[i].cell, b[i].cell);
        EXPECT_EQ(a[i].rank, b[i].rank);
    }
    EXPECT_EQ(a.front().case_id, "case-0");
    EXPECT_EQ(a.back().case_id, "case-4");
}

TEST(Plan, EmptyDimensionsRejected) {
    for (int which = 0; which < 4; ++which) {
        auto m = full_matrix(2);
        if (which == 0) m.cases.clear();
        if (which == 1) m.knowledge_modes.clear();
        if (which == 2) m.contexts.clear();
        if (which == 3) m.schemes.clear();
        try {
            plan(m);
            FAIL() << which;
        } catch (const HarnessError& e) {
            EXPECT_EQ(e.kind(), ErrorKind::validation);
        }
    }
    auto dup = full_matrix(2);
    dup.schemes.push_back(SchemeKind::cot);
    EXPECT_THROW(plan(dup), HarnessError);
}

// ---- execute ---------------------------------------------------------------------------

TEST(Execute, SingleTrialProducesOutcome) {
    e2e::Fixture fx;
    ScenarioMatrix m;
    m.cases = {fx.cases[0]};
    m.knowledge_modes = {KnowledgeMode::raw};
    m.contexts = {true};
    m.schemes = {SchemeKind::cot};
    m.k = 1;
    const auto dir = e2e::temp_dir("single");
    const auto res = execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir));
    ASSERT_EQ(res.records.size(), 1u);
    const auto& r = res.records[0];
    EXPECT_TRUE(r.ok()) << r.error_message;
    EXPECT_EQ(r.rank, 1);
    EXPECT_FALSE(r.knowledge_item_id.empty());
    EXPECT_FALSE(r.fingerprint.empty());
    EXPECT_EQ(load_run_log(dir / kRunLogName).size(), 1u);
    EXPECT_TRUE(fs::exists(dir / kManifestName));
}

TEST(Execute, TwoRunsGiveIdenticalRecords) {
    std::string first;
    for (int run = 0; run < 2; ++run) {
        e2e::Fixture fx;
        const auto m = fx.matrix();
        const auto res = execute(plan(m), m.cases, fx.model, fx.resources(),
                                 opts(e2e::temp_dir("twice" + std::to_string(run)), run == 0 ? 1 : 6));
        EXPECT_EQ(res.records.size(), m.execution_count());
        EXPECT_EQ(res.errors, 0u);
        const auto text = canonical_records(res.records);
        if (run == 0) {
            first = text;
        } else {
            EXPECT_EQ(text, first);
        }
    }
}

TEST(Execute, AllCategoriesAndPathsOccur) {
    e2e::Fixture fx;
    const auto m = fx.matrix();
    const auto res = execute(plan(m), m.cases, fx.model, fx.resources(), opts(e2e::temp_dir("cats")));
    std::set<Category> cats;
    std::set<ExtractionMethod> methods;
    for (const auto& r : res.records) {
        ASSERT_TRUE(r.ok()) << r.key() << ": " << r.error_message;
        cats.insert(r.outcome->category);
        methods.insert(r.verdict->extraction_method);
    }
    EXPECT_EQ(cats.size(), 5u);
    EXPECT_EQ(methods.size(), 2u);
}

TEST(Execute, FinishedRunIsNotRepeated) {
    e2e::Fixture fx;
    const auto m = fx.matrix();
    const auto dir = e2e::temp_dir("rerun");
    execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir));
    const auto calls = fx.mock->call_count();
    const auto again = execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir));
    EXPECT_EQ(fx.mock->call_count(), calls);
    EXPECT_EQ(again.executed, 0u);
    EXPECT_EQ(again.skipped, m.execution_count());
}

TEST(Execute, ResumeAfterStopHasNoDuplicateCalls) {
    // reference: one uninterrupted run
    std::map<std::tuple<std::string, std::string, int64_t, int>, int> reference;
    {
        e2e::Fixture fx;
        auto counting = std::make_shared<CountingBackend>(fx.mock);
        fx.gateway->register_backend("mock", counting, 8);
        const auto m = fx.matrix();
        execute(plan(m), m.cases, fx.model, fx.resources(), opts(e2e::temp_dir("ref")));
        reference = counting->seen;
    }

    e2e::Fixture fx;
    auto counting = std::make_shared<CountingBackend>(fx.mock);
    fx.gateway->register_backend("mock", counting, 8);
    const auto m = fx.matrix();
    const auto dir = e2e::temp_dir("killed");
    std::atomic<bool> stop{false};
    auto o = opts(dir, 3);
    o.stop = &stop;
    std::atomic<int> seen{0};
    o.on_record = [&](const TrialRecord&) {
        if (++seen == 17) stop = true;
    };
    const auto partial = execute(plan(m), m.cases, fx.model, fx.resources(), o);
    EXPECT_TRUE(partial.stopped);
    EXPECT_LT(partial.records.size(), m.execution_count());

    const auto resumed = execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir, 3));
    EXPECT_FALSE(resumed.stopped);
    EXPECT_EQ(resumed.records.size(), m.execution_count());
    EXPECT_EQ(resumed.skipped, partial.records.size());
    EXPECT_EQ(counting->seen, reference);
}

TEST(Execute, TornLogTailIsRepairedAndCacheAvoidsRecall) {
    const auto dir = e2e::temp_dir("torn");
    e2e::Fixture fx(dir / "cache");
    ScenarioMatrix m = fx.matrix(1);
    m.knowledge_modes = {KnowledgeMode::none};
    execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir));
    const auto calls = fx.mock->call_count();

    // lose the last record mid-write
    auto text = read_text_file(dir / kRunLogName);
    text.pop_back();
    const auto cut = text.rfind('\n');
    write_text_file(dir / kRunLogName, text.substr(0, cut + 1) + text.substr(cut + 1, 25));

    const auto res = execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir));
    EXPECT_EQ(res.executed, 1u);
    EXPECT_EQ(res.records.size(), m.execution_count());
    EXPECT_EQ(fx.mock->call_count(), calls);  // served from the response cache
    EXPECT_EQ(load_run_log(dir / kRunLogName).size(), m.execution_count());
}

TEST(Execute, TransportFailureIsIsolated) {
    e2e::Fixture fx;
    ScenarioMatrix m;
    m.cases = {fx.cases[0], fx.cases[2], fx.cases[3]};
    m.knowledge_modes = {KnowledgeMode::none};
    m.contexts = {false};
    m.schemes = {SchemeKind::cot};
    m.none_repeats = 1;
    const auto bad = assemble(m.cases[1], {KnowledgeMode::none, SchemeKind::cot, false}, nullptr, nullptr, true);
    fx.mock->script(bad.fingerprint, {{{"No.", {}}}, 100});
    const auto res = execute(plan(m), m.cases, fx.model, fx.resources(), opts(e2e::temp_dir("iso")));
    ASSERT_EQ(res.records.size(), 3u);
    int ok = 0;
    for (const auto& r : res.records) {
        if (r.ok()) {
            ++ok;
        } else {
            EXPECT_EQ(r.case_id, m.cases[1].id);
            EXPECT_EQ(*r.error_kind, ErrorKind::transport);
        }
    }
    EXPECT_EQ(ok, 2);
    EXPECT_EQ(res.errors, 1u);
}

TEST(Execute, ErrorRecordsAreRetriedOnResume) {
    e2e::Fixture fx;
    ScenarioMatrix m;
    m.cases = {fx.cases[2]};
    m.knowledge_modes = {KnowledgeMode::none};
    m.contexts = {false};
    m.schemes = {SchemeKind::cot};
    m.none_repeats = 1;
    const auto bundle = assemble(m.cases[0], {KnowledgeMode::none, SchemeKind::cot, false}, nullptr, nullptr, true);
    fx.mock->script(bundle.fingerprint, {{{"No. Type: none. Reason: fine.", {}}}, 3});
    const auto dir = e2e::temp_dir("retry");
    EXPECT_FALSE(execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir)).records[0].ok());
    const auto res = execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir));
    EXPECT_TRUE(res.records[0].ok());
    EXPECT_EQ(res.records[0].outcome->category, Category::TN);
}

TEST(Execute, HighErrorRateAborts) {
    e2e::Fixture fx;
    fx.mock->set_fallback([](const PromptBundle&) { return MockBackend::Script{{{"x", {}}}, 100}; });
    const auto m = fx.matrix();
    const auto dir = e2e::temp_dir("abort");
    try {
        execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir, 2));
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::run_aborted);
        EXPECT_NE(std::string(e.what()).find("transport"), std::string::npos);
    }
    const auto logged = load_run_log(dir / kRunLogName);
    EXPECT_GE(logged.size(), 20u);
    EXPECT_LT(logged.size(), m.execution_count());
}

TEST(Execute, ManifestDriftRefusesResume) {
    e2e::Fixture fx;
    ScenarioMatrix m = fx.matrix(1);
    m.knowledge_modes = {KnowledgeMode::none};
    const auto dir = e2e::temp_dir("drift");
    execute(plan(m), m.cases, fx.model, fx.resources(), opts(dir));

    auto changed = m.cases;
    changed[0].code += "\n// edited";
    try {
        execute(plan(m), changed, fx.model, fx.resources(), opts(dir));
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::manifest_drift);
    }
    auto other_seed = opts(dir);
    other_seed.seed = 8;
    EXPECT_THROW(execute(plan(m), m.cases, fx.model, fx.resources(), other_seed), HarnessError);

    // unset seed adopts the pinned one
    auto keep = opts(dir);
    keep.seed.reset();
    EXPECT_EQ(execute(plan(m), m.cases, fx.model, fx.resources(), keep).manifest.seed, 7);
}

TEST(Execute, NoneRepeatsUseDistinctSeeds) {
    e2e::Fixture fx;
    auto counting = std::make_shared<CountingBackend>(fx.mock);
    fx.gateway->register_backend("mock", counting, 8);
    ScenarioMatrix m;
    m.cases = {fx.cases[3]};
    m.knowledge_modes = {KnowledgeMode::none};
    m.contexts = {false};
    m.schemes = {SchemeKind::cot};
    const auto res = execute(plan(m), m.cases, fx.model, fx.resources(), opts(e2e::temp_dir("seeds")));
    ASSERT_EQ(res.records.size(), 3u);
    std::set<int64_t> seeds;
    for (const auto& [k, n] : counting->seen)
        if (std::get<0>(k) == fx.model.model_id) seeds.insert(std::get<2>(k));
    EXPECT_EQ(seeds, (std::set<int64_t>{7, 8, 9}));
}

TEST(Execute, MissingResourcesArePreconditions) {
    e2e::Fixture fx;
    const auto m = fx.matrix();
    auto r = fx.resources();
    r.knowledge = nullptr;
    try {
        execute(plan(m), m.cases, fx.model, r, opts(e2e::temp_dir("pre")));
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::precondition);
    }
}

TEST(RunLog, ConflictingFingerprintsAreDrift) {
    const auto dir = e2e::temp_dir("conflict");
    TrialRecord r;
    r.case_id = "a";
    r.model_id = "m";
    r.fingerprint = "f1";
    append_jsonl(dir / "log.jsonl", to_json(r));
    r.fingerprint = "f1";
    append_jsonl(dir / "log.jsonl", to_json(r));
    EXPECT_EQ(load_run_log(dir / "log.jsonl").size(), 1u);
    r.fingerprint = "f2";
    append_jsonl(dir / "log.jsonl", to_json(r));
    EXPECT_THROW(load_run_log(dir / "log.jsonl"), HarnessError);
}

TEST(RunLog, RecordJsonRoundTrip) {
    TrialRecord r;
    r.case_id = "x";
    r.language = Language::java;
    r.knowledge_mode = KnowledgeMode::summarized;
    r.rank = 2;
    r.context = true;
    r.scheme = SchemeKind::cot;
    r.model_id = "m";
    r.fingerprint = "fp";
    Verdict v;
    v.says_vulnerable = true;
    v.claimed_type = "overflow";
    r.verdict = v;
    r.outcome = AnnotatedOutcome{Category::FPt, false};
    r.usage.prompt_tokens = 12;
    const auto back = trial_record_from_json(to_json(r));
    EXPECT_EQ(to_json(back).dump(), to_json(r).dump());
    r.outcome.reset();
    r.error_kind = ErrorKind::unparseable_verdict;
    r.error_message = "no";
    EXPECT_EQ(to_json(trial_record_from_json(to_json(r))).dump(), to_json(r).dump());
}

// ---- report ----------------------------------------------------------------------------

namespace {

std::vector<TrialRecord> random_records(std::mt19937& rng, size_t n) {
    std::vector<TrialRecord> out;
    std::uniform_int_distribution<int> pick(0, 100);
    for (size_t i = 0; i < n; ++i) {
        TrialRecord r;
        r.case_id = "c" + std::to_string(i);
        r.knowledge_mode = static_cast<KnowledgeMode>(pick(rng) % 3);
        r.rank = r.knowledge_mode == KnowledgeMode::none ? 0 : 1 + pick(rng) % 3;
        r.context = pick(rng) % 2 == 0;
        r.scheme = static_cast<SchemeKind>(pick(rng) % 2);
        r.model_id = pick(rng) % 2 ? "alpha" : "beta";
        r.language = static_cast<Language>(pick(rng) % 3);
        if (pick(rng) < 10) {
            r.error_kind = ErrorKind::transport;
        } else {
            r.outcome = AnnotatedOutcome{kAllCategories[static_cast<size_t>(pick(rng) % 5)], std::nullopt};
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST(Report, KnowledgeByContextLayout) {
    e2e::Fixture fx;
    const auto m = fx.matrix();
    const auto res = execute(plan(m), m.cases, fx.model, fx.resources(), opts(e2e::temp_dir("rep")));
    const auto table = report(res.records, {Dimension::knowledge, Dimension::context});
    ASSERT_EQ(table.rows.size(), 6u);
    const std::vector<std::vector<std::string>> expected = {
        {"none", "with"}, {"none", "without"}, {"raw", "with"},
        {"raw", "without"}, {"summarized", "with"}, {"summarized", "without"}};
    for (size_t i = 0; i < 6; ++i) EXPECT_EQ(table.rows[i].group, expected[i]);
    // every row sums the three ranks or three repeats of 4 cases x 2 schemes
    for (const auto& row : table.rows) EXPECT_EQ(row.counts.total() + row.errors, 24);
    const auto text = table.to_text();
    EXPECT_NE(text.find("knowledge"), std::string::npos);
    EXPECT_NE(text.find("summarized"), std::string::npos);
}

TEST(Report, SingleGroupConservesCounts) {
    std::mt19937 rng(3);
    for (int round = 0; round < 50; ++round) {
        const auto records = random_records(rng, 1 + static_cast<size_t>(round) * 7);
        Counts expected;
        int64_t errors = 0;
        for (const auto& r : records) {
            if (r.ok()) expected.add(r.outcome->category);
            else ++errors;
        }
        const auto one = report(records, {});
        ASSERT_EQ(one.rows.size(), 1u);
        EXPECT_EQ(one.rows[0].counts, expected);
        EXPECT_EQ(one.rows[0].errors, errors);

        const auto grouped = report(records, {Dimension::model, Dimension::language, Dimension::rank});
        Counts sum;
        int64_t err_sum = 0;
        for (const auto& row : grouped.rows) {
            sum += row.counts;
            err_sum += row.errors;
        }
        EXPECT_EQ(sum, expected);
        EXPECT_EQ(err_sum, errors);
    }
}

TEST(Report, BaselineDeltas) {
    std::mt19937 rng(5);
    const auto records = random_records(rng, 400);
    const std::vector<Dimension> dims = {Dimension::knowledge, Dimension::context};
    const auto base = parse_baseline("none", dims, records);
    EXPECT_EQ(base.dimension, Dimension::knowledge);
    const auto table = report(records, dims, base);
    for (const auto& row : table.rows) {
        ASSERT_TRUE(row.has_baseline);
        if (row.group[0] == "none") {
            EXPECT_DOUBLE_EQ(*row.delta_f1, 0.0);
            EXPECT_DOUBLE_EQ(*row.delta_precision, 0.0);
        }
        const auto* b = &*std::find_if(table.rows.begin(), table.rows.end(), [&](const ReportRow& r) {
            return r.group[0] == "none" && r.group[1] == row.group[1];
        });
        EXPECT_NEAR(*row.delta_f1, (*row.metrics.f1 - *b->metrics.f1) * 100.0, 1e-9);
    }
    const auto csv = table.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "knowledge,context,tp,fp,tn,fn,fpt,errors,precision,recall,f1,delta_precision,delta_recall,delta_f1");
    EXPECT_NE(table.to_text().find("+"), std::string::npos);

    const auto explicit_base = parse_baseline("context=without", dims, records);
    EXPECT_EQ(explicit_base.dimension, Dimension::context);
}

TEST(Report, UnknownDimensionAndBadBaseline) {
    try {
        parse_dimensions("knowledge,colour");
        FAIL();
    } catch (const HarnessError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::unknown_dimension);
    }
    std::mt19937 rng(1);
    const auto records = random_records(rng, 30);
    EXPECT_THROW(parse_baseline("nothing", {Dimension::knowledge}, records), HarnessError);
    EXPECT_THROW(parse_baseline("context=with", {Dimension::knowledge}, records), HarnessError);
}

TEST(Report, UndefinedMetricsRenderAsDash) {
    TrialRecord r;
    r.case_id = "a";
    r.model_id = "m";
    r.outcome = AnnotatedOutcome{Category::TN, std::nullopt};
    const auto table = report({r}, {Dimension::model});
    EXPECT_NE(table.to_text().find("—"), std::string::npos);
    EXPECT_NE(table.to_csv().find("0,0,1,0,0,0,,,"), std::string::npos);
}

TEST(MatrixConfig, LoadsDeclarativeFile) {
    const auto dir = e2e::temp_dir("cfg");
    save_cases(dir / "cases.jsonl", synthetic_cases(3));
    write_text_file(dir / "matrix.json", R"({"cases": "cases.jsonl", "knowledge": ["none", "raw"],
        "context": ["without"], "scheme": ["cot"], "k": 2, "none_repeats": 1, "embedder": "hash-32",
        "knowledge_base": "kb"})");
    const auto cfg = load_matrix_config(dir / "matrix.json");
    EXPECT_EQ(cfg.matrix.cases.size(), 3u);
    EXPECT_EQ(cfg.matrix.trial_count(), 3u * 3);
    EXPECT_EQ(*cfg.knowledge_dir, dir / "kb");
    EXPECT_EQ(cfg.embedder, "hash-32");

    write_text_file(dir / "bad.json", R"({"cases": "cases.jsonl", "context": ["maybe"]})");
    EXPECT_THROW(load_matrix_config(dir / "bad.json"), HarnessError);
}
