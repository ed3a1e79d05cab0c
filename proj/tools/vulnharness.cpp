// Command-line front end: knowledge store upkeep, context extraction, prompt inspection,
// scenario runs, reports and benchmark construction.

#include <atomic>
#include <csignal>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "vulnharness/benchkit.hpp"
#include "vulnharness/context.hpp"
#include "vulnharness/io.hpp"
#include "vulnharness/knowledge.hpp"
#include "vulnharness/prompt.hpp"
#include "vulnharness/providers.hpp"
#include "vulnharness/runner.hpp"

using namespace vulnharness;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

struct Common {
    std::string providers;
    std::string cache_dir;
    int workers = 4;
};

std::vector<ProviderConfig> providers_from(const std::string& path) {
    if (path.empty()) return {};
    return load_provider_configs(path);
}

std::unique_ptr<LlmGateway> make_gateway(const std::vector<ProviderConfig>& configs, const std::string& cache_dir) {
    GatewayOptions opts;
    if (!cache_dir.empty()) opts.cache_dir = fs::path(cache_dir);
    auto gw = std::make_unique<LlmGateway>(opts);
    register_providers(*gw, configs);
    return gw;
}

// Runs `fn(i)` for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(size_t n, int workers, Fn fn) {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < std::max(1, workers); ++w)
        pool.emplace_back([&] {
            for (size_t i; (i = next.fetch_add(1)) < n;) fn(i);
        });
    for (auto& t : pool) t.join();
}

const TargetCase& find_case(const std::vector<TargetCase>& cases, const std::string& id) {
    for (const auto& c : cases)
        if (c.id == id) return c;
    throw HarnessError(ErrorKind::validation, "no case with id " + id);
}

// ---- kb --------------------------------------------------------------------------------

struct KbArgs {
    std::string dir;
    std::string reports;
    std::string lang;
    std::string source = "audit_report";
    std::string model;
    std::string mode;
    std::string embedder = "hash-256";
    std::string cases;
    std::string case_id;
    size_t k = kDefaultTopK;
};

int kb_ingest(const KbArgs& a) {
    KnowledgeBase kb = fs::exists(fs::path(a.dir) / "knowledge.jsonl") ? KnowledgeBase::load(a.dir) : KnowledgeBase{};
    const size_t before = kb.items().size();
    for (const auto& row : read_jsonl(a.reports)) {
        const auto lang = row.contains("language") ? parse_language(row["language"].get<std::string>())
                                                   : parse_language(a.lang);
        const auto source = parse_knowledge_source(row.value("source", a.source));
        ingest_report(kb, row.at("report_text").get<std::string>(), row.at("vulnerable_code").get<std::string>(), lang,
                      source);
    }
    kb.save(a.dir);
    std::cout << "ingested " << kb.items().size() - before << " new items, " << kb.items().size() << " total\n";
    return 0;
}

int kb_summarize(const KbArgs& a, const Common& common) {
    KnowledgeBase kb = KnowledgeBase::load(a.dir);
    const auto configs = providers_from(common.providers);
    auto gw = make_gateway(configs, common.cache_dir);
    const auto handle = handle_for(find_provider(configs, a.model));

    std::vector<KnowledgeItem> items = kb.items();
    std::mutex mu;
    size_t done = 0, malformed = 0;
    parallel_for(items.size(), common.workers, [&](size_t i) {
        try {
            auto filled = summarize_item(items[i], *gw, handle);
            std::lock_guard lock(mu);
            items[i] = std::move(filled);
            ++done;
        } catch (const HarnessError& e) {
            std::lock_guard lock(mu);
            ++malformed;
            std::cerr << "skip " << items[i].id << ": " << e.what() << "\n";
        }
    });
    for (auto& item : items) kb.upsert(std::move(item));
    kb.save(a.dir);
    std::cout << "summarized " << done << ", failed " << malformed << "\n";
    return malformed == 0 ? 0 : 2;
}

int kb_embed(const KbArgs& a, const Common& common) {
    KnowledgeBase kb = KnowledgeBase::load(a.dir);
    auto embedder = make_embedder(a.embedder, providers_from(common.providers));
    const auto& store = kb.embed(*embedder, parse_embed_mode(a.mode));
    kb.save(a.dir);
    std::cout << "embedded " << store.size() << " items, dim " << store.dimension() << "\n";
    return 0;
}

int kb_query(const KbArgs& a, const Common& common) {
    const KnowledgeBase kb = KnowledgeBase::load(a.dir);
    const auto configs = providers_from(common.providers);
    auto embedder = make_embedder(a.embedder, configs);
    const auto mode = parse_knowledge_mode(a.mode);
    TargetCase target = find_case(load_cases(a.cases), a.case_id);
    if (mode == KnowledgeMode::summarized && !target.functionality_summary) {
        if (a.model.empty()) throw HarnessError(ErrorKind::precondition, "summarized query needs --model for the case summary");
        auto gw = make_gateway(configs, common.cache_dir);
        ensure_case_summary(target, *gw, handle_for(find_provider(configs, a.model)));
    }
    for (const auto& r : retrieve_for_case(target, mode, kb, *embedder, a.k))
        std::cout << nlohmann::json{{"rank", r.rank}, {"id", r.item_id}, {"score", r.score}, {"payload", r.payload}}.dump()
                  << "\n";
    return 0;
}

// ---- ctx -------------------------------------------------------------------------------

struct CtxArgs {
    std::string lang;
    std::string src;
    std::string out;
    std::string index;
};

int ctx_extract(const CtxArgs& a) {
    const auto lang = parse_language(a.lang);
    auto files = collect_sources(a.src, lang);
    SourceIndex index = parse_functions(files, lang);
    const auto graph = build_call_graph(index.functions);
    const fs::path out(a.out);
    const fs::path index_path = a.index.empty() ? out.parent_path() / "functions.jsonl" : fs::path(a.index);
    save_graph(out, graph);
    save_function_index(index_path, index);
    for (const auto& e : index.errors) std::cerr << e.file.string() << ":" << e.line << ": " << e.message << "\n";
    std::cout << files.size() << " files, " << index.functions.size() << " functions, " << graph.edges.size()
              << " edges, " << graph.unresolved_calls << " unresolved calls, " << index.errors.size()
              << " file errors\n";
    return 0;
}

// ---- prompt ----------------------------------------------------------------------------

struct PromptArgs {
    std::string cell;
    std::string case_id;
    std::string cases;
    std::string kb;
    std::string embedder = "hash-256";
    std::string index;
    std::string graph;
    std::string model;
    int rank = 1;
    bool tools = true;
};

int prompt_render(const PromptArgs& a, const Common& common) {
    const auto cell = parse_prompt_scheme(a.cell);
    const auto configs = providers_from(common.providers);
    TargetCase target = find_case(load_cases(a.cases), a.case_id);

    std::optional<RetrievedKnowledge> knowledge;
    if (cell.knowledge_mode != KnowledgeMode::none) {
        if (a.kb.empty()) throw HarnessError(ErrorKind::precondition, "cell " + a.cell + " needs --kb");
        const KnowledgeBase kb = KnowledgeBase::load(a.kb);
        auto embedder = make_embedder(a.embedder, configs);
        if (cell.knowledge_mode == KnowledgeMode::summarized && !target.functionality_summary) {
            if (a.model.empty()) throw HarnessError(ErrorKind::precondition, "summarized cell needs --model for the case summary");
            auto gw = make_gateway(configs, common.cache_dir);
            ensure_case_summary(target, *gw, handle_for(find_provider(configs, a.model)));
        }
        const auto hits = retrieve_for_case(target, cell.knowledge_mode, kb, *embedder, static_cast<size_t>(a.rank));
        if (static_cast<int>(hits.size()) < a.rank)
            throw HarnessError(ErrorKind::precondition, "store holds fewer than " + std::to_string(a.rank) + " items");
        knowledge = hits.back();
    }

    std::optional<ContextBundle> context;
    SourceIndex corpus;
    if (!a.index.empty()) corpus = load_function_index(a.index);
    if (cell.include_context) {
        if (a.graph.empty() || a.index.empty())
            throw HarnessError(ErrorKind::precondition, "cell " + a.cell + " needs --graph and --index");
        context = context_for_case(target, load_graph(a.graph), corpus.functions);
    }
    const bool tools = a.tools && !a.index.empty();
    const auto bundle = assemble(target, cell, knowledge ? &*knowledge : nullptr, context ? &*context : nullptr, tools);
    std::cout << nlohmann::json{{"cell", cell.label()},
                                {"case", target.id},
                                {"fingerprint", bundle.fingerprint},
                                {"system", bundle.system_text},
                                {"user", bundle.user_text},
                                {"tools", bundle.tool_schemas}}
                     .dump(2)
              << "\n";
    return 0;
}

// ---- run / report ----------------------------------------------------------------------

struct RunArgs {
    std::string matrix;
    std::string model;
    std::string out;
    std::optional<int64_t> seed;
    std::optional<int> workers;
};

int run_matrix(const RunArgs& a, const Common& common) {
    const auto cfg = load_matrix_config(a.matrix);
    const std::string providers_path = !common.providers.empty() ? common.providers
                                       : cfg.providers            ? cfg.providers->string()
                                                                  : std::string();
    const auto configs = providers_from(providers_path);
    const fs::path out(a.out);
    auto gw = make_gateway(configs, common.cache_dir.empty() ? (out / "cache").string() : common.cache_dir);

    const auto& m = cfg.matrix;
    const bool needs_kb = std::any_of(m.knowledge_modes.begin(), m.knowledge_modes.end(),
                                      [](KnowledgeMode k) { return k != KnowledgeMode::none; });
    const bool needs_context = std::find(m.contexts.begin(), m.contexts.end(), true) != m.contexts.end();

    std::optional<KnowledgeBase> kb;
    std::unique_ptr<Embedder> embedder;
    if (needs_kb) {
        if (!cfg.knowledge_dir) throw HarnessError(ErrorKind::precondition, "matrix uses knowledge but names no knowledge_base");
        kb = KnowledgeBase::load(*cfg.knowledge_dir);
        embedder = make_embedder(cfg.embedder, configs);
    }
    std::optional<SourceIndex> corpus;
    std::optional<CallGraph> graph;
    if (cfg.function_index) corpus = load_function_index(*cfg.function_index);
    if (cfg.graph) graph = load_graph(*cfg.graph);
    if (needs_context && (!corpus || !graph))
        throw HarnessError(ErrorKind::precondition, "matrix uses context but names no function_index and graph");

    const auto model = handle_for(find_provider(configs, a.model));
    RunResources res;
    res.knowledge = kb ? &*kb : nullptr;
    res.embedder = embedder.get();
    res.graph = graph ? &*graph : nullptr;
    res.corpus = corpus ? &*corpus : nullptr;
    res.gateway = gw.get();
    res.annotator = cfg.annotator ? handle_for(find_provider(configs, *cfg.annotator)) : model;

    ExecuteOptions opts;
    opts.out_dir = out;
    opts.workers = a.workers.value_or(cfg.workers);
    opts.seed = a.seed;
    opts.stop = &g_stop;
    std::atomic<size_t> seen{0};
    const size_t total = m.execution_count();
    opts.on_record = [&](const TrialRecord& r) {
        const size_t n = seen.fetch_add(1) + 1;
        if (!r.ok()) std::cerr << "trial " << r.key() << ": " << to_string(*r.error_kind) << ": " << r.error_message << "\n";
        if (n % 100 == 0) std::cerr << n << " trials this session\n";
    };

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto result = execute(plan(m), m.cases, model, res, opts);
    std::cout << "executed " << result.executed << ", skipped " << result.skipped << ", errors " << result.errors
              << ", logged " << result.records.size() << " of " << total << (result.stopped ? " (stopped)" : "")
              << "\nseed " << result.manifest.seed << "\n";
    return result.stopped ? 3 : 0;
}

struct ReportArgs {
    std::string runs;
    std::string group_by = "knowledge,context";
    std::string baseline;  // empty: no delta columns
    bool csv = false;
};

int report_runs(const ReportArgs& a) {
    fs::path log(a.runs);
    if (fs::is_directory(log)) log /= kRunLogName;
    const auto records = load_run_log(log);
    const auto dims = parse_dimensions(a.group_by);
    std::optional<Baseline> baseline;
    if (!a.baseline.empty()) baseline = parse_baseline(a.baseline, dims, records);
    const auto table = report(records, dims, baseline);
    std::cout << (a.csv ? table.to_csv() : table.to_text());
    return 0;
}

// ---- bench -----------------------------------------------------------------------------

struct BenchArgs {
    std::string cwe;
    std::string lang;
    int n = kDefaultSnippetsPerCwe;
    std::string model;
    std::string out;
    std::string cases;
};

int bench_synth(const BenchArgs& a, const Common& common) {
    auto entries = load_cwe_entries(a.cwe);
    if (!a.lang.empty()) {
        const auto lang = parse_language(a.lang);
        std::erase_if(entries, [&](const CweEntry& e) { return e.language != lang; });
    }
    const auto configs = providers_from(common.providers);
    auto gw = make_gateway(configs, common.cache_dir);
    const auto result = synthesize_all(entries, *gw, handle_for(find_provider(configs, a.model)), a.n, common.workers);

    KnowledgeBase kb = fs::exists(fs::path(a.out) / "knowledge.jsonl") ? KnowledgeBase::load(a.out) : KnowledgeBase{};
    for (const auto& item : result.items) kb.upsert(item);
    kb.save(a.out);
    const auto& t = result.tally;
    std::cout << entries.size() << " CWEs, requested " << t.requested << ", produced " << t.produced
              << ", missing snippets " << t.missing_snippets << ", bad reports " << t.bad_reports << "\n";
    return 0;
}

int bench_sanitize(const BenchArgs& a, const Common& common) {
    const auto cases = load_cases(a.cases);
    const auto configs = providers_from(common.providers);
    auto gw = make_gateway(configs, common.cache_dir);
    const auto handle = handle_for(find_provider(configs, a.model));

    std::vector<std::optional<SanitizeResult>> results(cases.size());
    std::vector<std::string> failures(cases.size());
    parallel_for(cases.size(), common.workers, [&](size_t i) {
        try {
            results[i] = sanitize_case(cases[i], *gw, handle);
        } catch (const HarnessError& e) {
            failures[i] = e.what();
        }
    });

    const fs::path out = a.out.empty() ? fs::path(a.cases).replace_extension(".sanitized.jsonl") : fs::path(a.out);
    std::vector<TargetCase> kept;
    std::vector<nlohmann::json> maps;
    size_t rejected = 0;
    for (size_t i = 0; i < cases.size(); ++i) {
        if (!results[i] || !results[i]->accepted()) {
            ++rejected;
            std::cerr << cases[i].id << ": " << (results[i] ? *results[i]->error : failures[i]) << "\n";
            continue;
        }
        kept.push_back(results[i]->sanitized);
        auto row = to_json(results[i]->map);
        row["id"] = cases[i].id;
        maps.push_back(std::move(row));
    }
    save_cases(out, kept);
    write_jsonl(fs::path(out).replace_extension(".map.jsonl"), maps);
    std::cout << "sanitized " << kept.size() << ", rejected " << rejected << " -> " << out.string() << "\n";
    return rejected == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM vulnerability-detection harness"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--providers", common.providers, "provider config file (JSON)");
    app.add_option("--cache", common.cache_dir, "response cache directory");
    app.add_option("--workers", common.workers, "concurrent requests")->check(CLI::PositiveNumber);

    // kb
    KbArgs kb;
    auto* kb_cmd = app.add_subcommand("kb", "knowledge store")->require_subcommand(1);
    auto* ingest = kb_cmd->add_subcommand("ingest", "add reports to the store");
    ingest->add_option("--kb", kb.dir, "store directory")->required();
    ingest->add_option("--reports", kb.reports, "line-delimited {report_text, vulnerable_code[, language, source]}")->required();
    ingest->add_option("--lang", kb.lang, "language for rows that name none")->default_val("solidity");
    ingest->add_option("--source", kb.source, "audit_report or cwe_synthesized");
    auto* summarize = kb_cmd->add_subcommand("summarize", "fill functionality and key concept");
    summarize->add_option("--kb", kb.dir)->required();
    summarize->add_option("--model", kb.model, "summarizing model")->required();
    auto* embed = kb_cmd->add_subcommand("embed", "build a vector store");
    embed->add_option("--kb", kb.dir)->required();
    embed->add_option("--mode", kb.mode)->required()->check(CLI::IsMember({"code", "functionality"}));
    embed->add_option("--embedder", kb.embedder, "hash-<dim> or openai:<provider>:<model>:<dim>");
    auto* query = kb_cmd->add_subcommand("query", "top-k knowledge for one case");
    query->add_option("--kb", kb.dir)->required();
    query->add_option("--mode", kb.mode)->required()->check(CLI::IsMember({"raw", "summarized"}));
    query->add_option("-k", kb.k)->check(CLI::PositiveNumber);
    query->add_option("--cases", kb.cases, "case file")->required();
    query->add_option("--case", kb.case_id)->required();
    query->add_option("--embedder", kb.embedder);
    query->add_option("--model", kb.model, "model for the case summary in summarized mode");

    // ctx
    CtxArgs ctx;
    auto* ctx_cmd = app.add_subcommand("ctx", "code context")->require_subcommand(1);
    auto* extract = ctx_cmd->add_subcommand("extract", "function index and call graph of a source tree");
    extract->add_option("--lang", ctx.lang)->required();
    extract->add_option("--src", ctx.src)->required()->check(CLI::ExistingDirectory);
    extract->add_option("--out", ctx.out, "graph file")->required();
    extract->add_option("--index", ctx.index, "function index file (default: functions.jsonl beside the graph)");

    // prompt
    PromptArgs pr;
    auto* prompt_cmd = app.add_subcommand("prompt", "prompt inspection")->require_subcommand(1);
    auto* render = prompt_cmd->add_subcommand("render", "print the assembled prompt for one cell");
    render->add_option("--cell", pr.cell, "mode,scheme,ctx|noctx")->required();
    render->add_option("--case", pr.case_id)->required();
    render->add_option("--cases", pr.cases, "case file")->required();
    render->add_option("--kb", pr.kb);
    render->add_option("--embedder", pr.embedder);
    render->add_option("--index", pr.index, "function index");
    render->add_option("--graph", pr.graph);
    render->add_option("--model", pr.model, "model for the case summary");
    render->add_option("--rank", pr.rank)->check(CLI::PositiveNumber);
    render->add_flag("!--no-tools", pr.tools, "render for a model without function calling");

    // run / report
    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "execute a scenario matrix");
    run_cmd->add_option("--matrix", run.matrix)->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--model", run.model)->required();
    run_cmd->add_option("--out", run.out)->required();
    run_cmd->add_option("--seed", run.seed);
    run_cmd->add_option("--trial-workers", run.workers)->check(CLI::PositiveNumber);
    ReportArgs rep;
    auto* report_cmd = app.add_subcommand("report", "aggregate a run log");
    report_cmd->add_option("--runs", rep.runs, "run directory or log file")->required();
    report_cmd->add_option("--group-by", rep.group_by);
    report_cmd->add_option("--baseline", rep.baseline, "none (knowledge=none) or dimension=value; omit for no deltas");
    report_cmd->add_flag("--csv", rep.csv);

    // bench
    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "benchmark construction")->require_subcommand(1);
    auto* synth = bench_cmd->add_subcommand("synth", "synthesize CWE knowledge");
    synth->add_option("--cwe", bench.cwe, "line-delimited {cwe_id, language, description}")->required();
    synth->add_option("--lang", bench.lang, "only entries of this language");
    synth->add_option("-n", bench.n)->check(CLI::PositiveNumber);
    synth->add_option("--model", bench.model)->required();
    synth->add_option("--out", bench.out, "store directory")->required();
    auto* sanitize = bench_cmd->add_subcommand("sanitize", "rename identifiers and reword comments");
    sanitize->add_option("--cases", bench.cases)->required();
    sanitize->add_option("--model", bench.model)->required();
    sanitize->add_option("--out", bench.out, "sanitized case file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return kb_ingest(kb);
        if (summarize->parsed()) return kb_summarize(kb, common);
        if (embed->parsed()) return kb_embed(kb, common);
        if (query->parsed()) return kb_query(kb, common);
        if (extract->parsed()) return ctx_extract(ctx);
        if (render->parsed()) return prompt_render(pr, common);
        if (run_cmd->parsed()) return run_matrix(run, common);
        if (report_cmd->parsed()) return report_runs(rep);
        if (synth->parsed()) return bench_synth(bench, common);
        if (sanitize->parsed()) return bench_sanitize(bench, common);
    } catch (const HarnessError& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
