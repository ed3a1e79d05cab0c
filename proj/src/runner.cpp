#include "vulnharness/runner.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "vulnharness/io.hpp"
#include "vulnharness/templates.hpp"

namespace vulnharness {

namespace {

template <typename T>
void require_distinct(const std::vector<T>& values, const char* what) {
    if (values.empty()) throw HarnessError(ErrorKind::validation, std::string("matrix has no ") + what);
    for (size_t i = 0; i < values.size(); ++i)
        for (size_t j = i + 1; j < values.size(); ++j)
            if (values[i] == values[j])
                throw HarnessError(ErrorKind::validation, std::string("duplicate entry in ") + what);
}

bool has_none(const ScenarioMatrix& m) {
    return std::find(m.knowledge_modes.begin(), m.knowledge_modes.end(), KnowledgeMode::none) !=
           m.knowledge_modes.end();
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms.count()));
    return out;
}

ErrorKind parse_error_kind(std::string_view text) {
    for (int i = 0; i <= static_cast<int>(ErrorKind::sanitization); ++i) {
        const auto kind = static_cast<ErrorKind>(i);
        if (to_string(kind) == text) return kind;
    }
    throw HarnessError(ErrorKind::validation, "unknown error kind: " + std::string(text));
}

std::string record_key(const std::string& case_id, KnowledgeMode mode, int rank, int repeat,
                       bool context, SchemeKind scheme, const std::string& model) {
    std::string key = case_id;
    key += '|';
    key += to_string(mode);
    key += '|' + std::to_string(rank) + '|' + std::to_string(repeat) + '|';
    key += context ? "ctx" : "noctx";
    key += '|';
    key += to_string(scheme);
    key += '|' + model;
    return key;
}

// Drops a partial last line left by a crash so later appends start on a fresh line.
void repair_torn_tail(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return;
    const auto text = read_text_file(path);
    if (text.empty() || text.back() == '\n') return;
    const auto cut = text.rfind('\n');
    write_text_file_atomic(path, cut == std::string::npos ? std::string() : text.substr(0, cut + 1));
}

class RunLog {
public:
    explicit RunLog(const std::filesystem::path& path) : out_(path, std::ios::app | std::ios::binary) {
        if (!out_) throw HarnessError(ErrorKind::io, "cannot open run log " + path.string());
    }

    void append(const nlohmann::json& row) {
        std::lock_guard lock(mutex_);
        out_ << row.dump() << '\n';
        out_.flush();
    }

private:
    std::mutex mutex_;
    std::ofstream out_;
};

void hash_store(std::string& acc, const VectorStore& store) {
    for (size_t i = 0; i < store.size(); ++i) {
        acc += store.ids()[i];
        acc += '\0';
        const auto row = store.row(i);
        for (Eigen::Index c = 0; c < row.size(); ++c) {
            const float v = row(c);
            acc.append(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
}

struct Execution {
    const TrialSpec* spec;
    int repeat;
    std::string key;
};

}  // namespace

// ---- matrix and plan -------------------------------------------------------------------

void ScenarioMatrix::validate() const {
    if (cases.empty()) throw HarnessError(ErrorKind::validation, "matrix has no cases");
    require_distinct(knowledge_modes, "knowledge modes");
    require_distinct(contexts, "contexts");
    require_distinct(schemes, "schemes");
    if (k < 1) throw HarnessError(ErrorKind::validation, "k must be at least 1");
    if (none_repeats < 1) throw HarnessError(ErrorKind::validation, "none_repeats must be at least 1");
    std::set<std::string> ids;
    for (const auto& c : cases)
        if (!ids.insert(c.id).second) throw HarnessError(ErrorKind::validation, "duplicate case id " + c.id);
}

size_t ScenarioMatrix::scenario_count() const {
    return cases.size() * knowledge_modes.size() * contexts.size() * schemes.size();
}

size_t ScenarioMatrix::trial_count() const {
    const size_t knowledge_modes_with_ranks = knowledge_modes.size() - (has_none(*this) ? 1 : 0);
    const size_t per_cell = static_cast<size_t>(k) * knowledge_modes_with_ranks + (has_none(*this) ? 1 : 0);
    return cases.size() * per_cell * contexts.size() * schemes.size();
}

size_t ScenarioMatrix::execution_count() const {
    const size_t knowledge_modes_with_ranks = knowledge_modes.size() - (has_none(*this) ? 1 : 0);
    const size_t per_cell = static_cast<size_t>(k) * knowledge_modes_with_ranks +
                            (has_none(*this) ? static_cast<size_t>(none_repeats) : 0);
    return cases.size() * per_cell * contexts.size() * schemes.size();
}

std::vector<TrialSpec> plan(const ScenarioMatrix& matrix) {
    matrix.validate();
    std::vector<TrialSpec> specs;
    specs.reserve(matrix.trial_count());
    for (size_t ci = 0; ci < matrix.cases.size(); ++ci) {
        for (const auto mode : matrix.knowledge_modes) {
            for (const bool ctx : matrix.contexts) {
                for (const auto scheme : matrix.schemes) {
                    TrialSpec s;
                    s.case_index = ci;
                    s.case_id = matrix.cases[ci].id;
                    s.cell = PromptScheme{mode, scheme, ctx};
                    if (mode == KnowledgeMode::none) {
                        s.rank = 0;
                        s.repeats = matrix.none_repeats;
                        specs.push_back(s);
                        continue;
                    }
                    for (int r = 1; r <= matrix.k; ++r) {
                        s.rank = r;
                        specs.push_back(s);
                    }
                }
            }
        }
    }
    return specs;
}

// ---- records ---------------------------------------------------------------------------

std::string TrialRecord::key() const {
    return record_key(case_id, knowledge_mode, rank, repeat, context, scheme, model_id);
}

nlohmann::json to_json(const TrialRecord& r, bool include_timestamps) {
    nlohmann::json j = {
        {"case_id", r.case_id},
        {"language", to_string(r.language)},
        {"ground_truth_vulnerable", r.ground_truth_vulnerable},
        {"knowledge_mode", to_string(r.knowledge_mode)},
        {"rank", r.rank},
        {"repeat", r.repeat},
        {"context", r.context},
        {"scheme", to_string(r.scheme)},
        {"model_id", r.model_id},
        {"fingerprint", r.fingerprint},
        {"knowledge_item_id", r.knowledge_item_id},
        {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}},
    };
    j["verdict"] = r.verdict ? to_json(*r.verdict) : nlohmann::json(nullptr);
    if (r.outcome) {
        j["outcome"] = {{"category", to_string(r.outcome->category)},
                        {"type_match", r.outcome->type_match ? nlohmann::json(*r.outcome->type_match)
                                                             : nlohmann::json(nullptr)}};
    } else {
        j["outcome"] = nullptr;
    }
    if (r.error_kind) {
        j["error"] = {{"kind", to_string(*r.error_kind)}, {"message", r.error_message}};
    } else {
        j["error"] = nullptr;
    }
    if (include_timestamps) {
        j["started_at"] = r.started_at;
        j["finished_at"] = r.finished_at;
    }
    return j;
}

TrialRecord trial_record_from_json(const nlohmann::json& j) {
    TrialRecord r;
    r.case_id = j.at("case_id").get<std::string>();
    r.language = parse_language(j.at("language").get<std::string>());
    r.ground_truth_vulnerable = j.value("ground_truth_vulnerable", false);
    r.knowledge_mode = parse_knowledge_mode(j.at("knowledge_mode").get<std::string>());
    r.rank = j.at("rank").get<int>();
    r.repeat = j.value("repeat", 1);
    r.context = j.at("context").get<bool>();
    r.scheme = parse_scheme(j.at("scheme").get<std::string>());
    r.model_id = j.at("model_id").get<std::string>();
    r.fingerprint = j.value("fingerprint", "");
    r.knowledge_item_id = j.value("knowledge_item_id", "");
    if (j.contains("verdict") && !j["verdict"].is_null()) r.verdict = verdict_from_json(j["verdict"]);
    if (j.contains("outcome") && !j["outcome"].is_null()) {
        AnnotatedOutcome o;
        o.category = parse_category(j["outcome"].at("category").get<std::string>());
        const auto& tm = j["outcome"].at("type_match");
        if (!tm.is_null()) o.type_match = tm.get<bool>();
        r.outcome = o;
    }
    if (j.contains("error") && !j["error"].is_null()) {
        r.error_kind = parse_error_kind(j["error"].at("kind").get<std::string>());
        r.error_message = j["error"].value("message", "");
    }
    r.started_at = j.value("started_at", "");
    r.finished_at = j.value("finished_at", "");
    if (j.contains("usage")) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", int64_t{0});
        r.usage.completion_tokens = j["usage"].value("completion_tokens", int64_t{0});
    }
    return r;
}

std::string canonical_records(std::vector<TrialRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const TrialRecord& a, const TrialRecord& b) { return a.key() < b.key(); });
    std::string out;
    for (const auto& r : records) {
        out += to_json(r, false).dump();
        out += '\n';
    }
    return out;
}

std::vector<TrialRecord> load_run_log(const std::filesystem::path& path) {
    std::map<std::string, TrialRecord> latest;
    if (!std::filesystem::exists(path)) return {};
    for (const auto& row : read_jsonl(path, true)) {
        auto r = trial_record_from_json(row);
        auto key = r.key();
        const auto it = latest.find(key);
        if (it != latest.end() && !it->second.fingerprint.empty() && !r.fingerprint.empty() &&
            it->second.fingerprint != r.fingerprint)
            throw HarnessError(ErrorKind::manifest_drift,
                               "run log has two prompts for trial " + key + "; inputs changed between runs");
        latest.insert_or_assign(std::move(key), std::move(r));
    }
    std::vector<TrialRecord> out;
    out.reserve(latest.size());
    for (auto& [_, r] : latest) out.push_back(std::move(r));
    return out;
}

// ---- manifest --------------------------------------------------------------------------

nlohmann::json to_json(const RunManifest& m) {
    return {{"corpus_hash", m.corpus_hash},
            {"store_hashes", m.store_hashes},
            {"templates_hash", m.templates_hash},
            {"seed", m.seed},
            {"model_id", m.model_id}};
}

RunManifest run_manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.corpus_hash = j.at("corpus_hash").get<std::string>();
    m.store_hashes = j.at("store_hashes").get<std::map<std::string, std::string>>();
    m.templates_hash = j.at("templates_hash").get<std::string>();
    m.seed = j.at("seed").get<int64_t>();
    m.model_id = j.at("model_id").get<std::string>();
    return m;
}

std::string corpus_hash(const std::vector<TargetCase>& cases) {
    std::string acc;
    for (auto c : cases) {
        c.functionality_summary.reset();  // derived during runs, not an input
        acc += to_json(c).dump();
        acc += '\n';
    }
    return sha256_hex(acc);
}

std::string knowledge_hash(const KnowledgeBase& kb, EmbedMode mode) {
    std::string acc;
    for (const auto& item : kb.items()) {
        acc += item.id + '\0' + item.report_text + '\0' + item.key_concept + '\n';
    }
    if (kb.has_store(mode)) hash_store(acc, kb.store(mode));
    return sha256_hex(acc);
}

std::string graph_hash(const CallGraph& graph, const SourceIndex& corpus) {
    std::string acc;
    for (const auto& [a, b] : graph.edges) acc += a + "->" + b + '\n';
    for (const auto& f : corpus.functions) acc += f.qualified_name + '\0' + f.source_text + '\n';
    for (const auto& c : corpus.containers) {
        acc += c.qualified_name;
        for (const auto& p : c.parents) acc += ':' + p;
        acc += '\n';
    }
    for (const auto& v : corpus.variables) acc += v.qualified_name + '\0' + v.source_text + '\n';
    return sha256_hex(acc);
}

std::string templates_hash() {
    using namespace templates;
    const std::string_view all[] = {kPrefixOwnKnowledge, kPrefixRawKnowledge,   kPrefixSummarizedKnowledge,
                                    kOutputResult,       kSchemeRaw,            kSchemeCot,
                                    kSummarizeFunctionality, kSummarizeRootCause, kInstructionFollowing,
                                    kCompareTypes,       kGenerateVulnerableCode, kGenerateReport};
    std::string acc;
    for (const auto t : all) {
        acc += std::to_string(t.size()) + ':';
        acc += t;
    }
    return sha256_hex(acc);
}

// ---- execute ---------------------------------------------------------------------------

ExecuteResult execute(const std::vector<TrialSpec>& specs, const std::vector<TargetCase>& input_cases,
                      const LlmHandle& model, const RunResources& res, const ExecuteOptions& options) {
    if (!res.gateway) throw HarnessError(ErrorKind::precondition, "execute needs a gateway");
    if (options.out_dir.empty()) throw HarnessError(ErrorKind::precondition, "execute needs an output directory");
    if (options.workers < 1) throw HarnessError(ErrorKind::validation, "workers must be at least 1");

    bool needs_knowledge = false;
    bool needs_context = false;
    int max_rank = 0;
    for (const auto& s : specs) {
        max_rank = std::max(max_rank, s.rank);
        if (s.case_index >= input_cases.size() || input_cases[s.case_index].id != s.case_id)
            throw HarnessError(ErrorKind::precondition, "trial refers to unknown case " + s.case_id);
        needs_knowledge |= s.cell.knowledge_mode != KnowledgeMode::none;
        needs_context |= s.cell.include_context;
    }
    if (needs_knowledge && (!res.knowledge || !res.embedder))
        throw HarnessError(ErrorKind::precondition, "knowledge trials need a knowledge base and an embedder");
    if (needs_context && (!res.graph || !res.corpus))
        throw HarnessError(ErrorKind::precondition, "context trials need a call graph and function index");

    std::filesystem::create_directories(options.out_dir);
    const auto manifest_path = options.out_dir / kManifestName;
    const auto log_path = options.out_dir / kRunLogName;
    const auto summaries_path = options.out_dir / kSummariesName;

    RunManifest manifest;
    manifest.corpus_hash = corpus_hash(input_cases);
    if (res.knowledge) {
        manifest.store_hashes["code"] = knowledge_hash(*res.knowledge, EmbedMode::code);
        manifest.store_hashes["functionality"] = knowledge_hash(*res.knowledge, EmbedMode::functionality);
    }
    if (res.graph && res.corpus) manifest.store_hashes["graph"] = graph_hash(*res.graph, *res.corpus);
    if (res.embedder) manifest.store_hashes["embedder"] = res.embedder->id();
    manifest.templates_hash = templates_hash();
    manifest.model_id = model.model_id;
    std::optional<RunManifest> previous;
    if (std::filesystem::exists(manifest_path))
        previous = run_manifest_from_json(nlohmann::json::parse(read_text_file(manifest_path)));
    manifest.seed = options.seed ? *options.seed : previous ? previous->seed : time_based_seed();
    if (previous && !(*previous == manifest)) {
        std::string what;
        if (previous->corpus_hash != manifest.corpus_hash) what += " corpus";
        if (previous->store_hashes != manifest.store_hashes) what += " stores";
        if (previous->templates_hash != manifest.templates_hash) what += " templates";
        if (previous->seed != manifest.seed) what += " seed";
        if (previous->model_id != manifest.model_id) what += " model";
        throw HarnessError(ErrorKind::manifest_drift,
                           "run in " + options.out_dir.string() + " was made with different inputs:" + what);
    }
    write_text_file_atomic(manifest_path, to_json(manifest).dump(2) + "\n");

    repair_torn_tail(log_path);
    std::map<std::string, TrialRecord> log;
    for (auto& r : load_run_log(log_path)) log.emplace(r.key(), std::move(r));

    std::vector<TargetCase> cases = input_cases;
    repair_torn_tail(summaries_path);
    if (std::filesystem::exists(summaries_path)) {
        std::map<std::string, std::string> saved;
        for (const auto& row : read_jsonl(summaries_path, true))
            saved[row.at("case_id").get<std::string>()] = row.at("summary").get<std::string>();
        for (auto& c : cases)
            if (!c.functionality_summary)
                if (const auto it = saved.find(c.id); it != saved.end()) c.functionality_summary = it->second;
    }

    ExecuteResult result;
    result.manifest = manifest;
    std::vector<Execution> pending;
    for (const auto& s : specs) {
        for (int rep = 1; rep <= s.repeats; ++rep) {
            auto key = record_key(s.case_id, s.cell.knowledge_mode, s.rank, rep, s.cell.include_context,
                                  s.cell.scheme, model.model_id);
            const auto it = log.find(key);
            if (it != log.end() && it->second.ok()) {
                ++result.skipped;
                continue;
            }
            pending.push_back({&s, rep, std::move(key)});
        }
    }

    RunLog run_log(log_path);
    std::mutex summaries_mutex;
    std::vector<std::mutex> case_mutexes(cases.size());
    std::mutex memo_mutex;
    std::map<std::pair<size_t, KnowledgeMode>, std::vector<RetrievedKnowledge>> retrieved;
    std::map<size_t, ContextBundle> contexts;
    std::mutex embedder_mutex;
    const LlmHandle summarizer = res.summarizer.value_or(res.annotator);
    const bool tools_available = model.supports_tools && res.corpus != nullptr;
    std::optional<ToolRegistry> tools;
    if (tools_available) tools = ToolRegistry::for_corpus(*res.corpus);

    auto knowledge_for = [&](size_t ci, KnowledgeMode mode) {
        {
            std::lock_guard lock(memo_mutex);
            if (const auto it = retrieved.find({ci, mode}); it != retrieved.end()) return it->second;
        }
        std::vector<RetrievedKnowledge> hits;
        {
            std::lock_guard case_lock(case_mutexes[ci]);
            auto& target = cases[ci];
            if (mode == KnowledgeMode::summarized && !target.functionality_summary) {
                ensure_case_summary(target, *res.gateway, summarizer);
                std::lock_guard lock(summaries_mutex);
                append_jsonl(summaries_path, {{"case_id", target.id}, {"summary", *target.functionality_summary}});
            }
            std::lock_guard embed_lock(embedder_mutex);
            hits = retrieve_for_case(target, mode, *res.knowledge, *res.embedder,
                                     static_cast<size_t>(max_rank));
        }
        std::lock_guard lock(memo_mutex);
        return retrieved.emplace(std::make_pair(ci, mode), std::move(hits)).first->second;
    };

    auto context_for = [&](size_t ci) {
        {
            std::lock_guard lock(memo_mutex);
            if (const auto it = contexts.find(ci); it != contexts.end()) return it->second;
        }
        auto bundle = context_for_case(input_cases[ci], *res.graph, res.corpus->functions);
        std::lock_guard lock(memo_mutex);
        return contexts.emplace(ci, std::move(bundle)).first->second;
    };

    auto run_one = [&](const Execution& e) {
        const auto& spec = *e.spec;
        const auto& base = input_cases[spec.case_index];
        TrialRecord rec;
        rec.case_id = base.id;
        rec.language = base.language;
        rec.ground_truth_vulnerable = base.ground_truth_vulnerable;
        rec.knowledge_mode = spec.cell.knowledge_mode;
        rec.rank = spec.rank;
        rec.repeat = e.repeat;
        rec.context = spec.cell.include_context;
        rec.scheme = spec.cell.scheme;
        rec.model_id = model.model_id;
        rec.started_at = utc_now();
        try {
            std::optional<RetrievedKnowledge> knowledge;
            if (spec.cell.knowledge_mode != KnowledgeMode::none) {
                const auto hits = knowledge_for(spec.case_index, spec.cell.knowledge_mode);
                if (static_cast<size_t>(spec.rank) > hits.size())
                    throw HarnessError(ErrorKind::precondition,
                                       "knowledge base has no entry at rank " + std::to_string(spec.rank));
                knowledge = hits[static_cast<size_t>(spec.rank) - 1];
                rec.knowledge_item_id = knowledge->item_id;
            }
            std::optional<ContextBundle> ctx;
            if (spec.cell.include_context) ctx = context_for(spec.case_index);

            const auto bundle = assemble(base, spec.cell, knowledge ? &*knowledge : nullptr,
                                         ctx ? &*ctx : nullptr, tools_available);
            rec.fingerprint = bundle.fingerprint;

            LlmHandle handle = model;
            handle.seed = manifest.seed + (e.repeat - 1);
            const auto exchange = res.gateway->complete(handle, bundle, tools ? &*tools : nullptr);
            rec.usage = exchange.usage;

            const auto verdict = extract_verdict(exchange, *res.gateway, res.annotator);
            rec.verdict = verdict;
            std::optional<bool> type_match;
            if (base.ground_truth_vulnerable && verdict.says_vulnerable)
                type_match = match_type(*base.ground_truth_type, verdict, *res.gateway, res.annotator);
            rec.outcome = classify(base.ground_truth_vulnerable, verdict, type_match);
        } catch (const HarnessError& err) {
            rec.error_kind = err.kind();
            rec.error_message = err.what();
        } catch (const std::exception& err) {
            rec.error_kind = ErrorKind::contract;
            rec.error_message = std::string("unexpected failure: ") + err.what();
        }
        rec.finished_at = utc_now();
        return rec;
    };

    std::atomic<size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex tally_mutex;
    size_t done = 0;
    std::map<std::string, size_t> error_kinds;

    auto worker = [&] {
        while (!abort.load()) {
            if (options.stop && options.stop->load()) break;
            const size_t i = next.fetch_add(1);
            if (i >= pending.size()) break;
            auto rec = run_one(pending[i]);
            run_log.append(to_json(rec));
            {
                std::lock_guard lock(tally_mutex);
                ++done;
                if (rec.error_kind) {
                    ++result.errors;
                    ++error_kinds[std::string(to_string(*rec.error_kind))];
                }
                if (done >= options.abort_min_trials &&
                    static_cast<double>(result.errors) > options.abort_error_rate * static_cast<double>(done))
                    abort.store(true);
                if (options.on_record) options.on_record(rec);
                log.insert_or_assign(pending[i].key, std::move(rec));
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(options.workers, static_cast<int>(pending.size())));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers && !pending.empty(); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    result.executed = done;
    result.stopped = done < pending.size() && !abort.load();
    for (auto& [_, r] : log) result.records.push_back(r);

    if (abort.load()) {
        std::ostringstream msg;
        msg << "run aborted: " << result.errors << " of " << done << " trials failed (limit "
            << options.abort_error_rate * 100.0 << "%);";
        for (const auto& [kind, n] : error_kinds) msg << ' ' << kind << '=' << n;
        msg << "; " << pending.size() - done << " trials not started";
        throw HarnessError(ErrorKind::run_aborted, msg.str());
    }
    return result;
}

// ---- matrix config ---------------------------------------------------------------------

MatrixConfig load_matrix_config(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(read_text_file(path));
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    MatrixConfig cfg;
    try {
        cfg.cases_path = resolve(j.at("cases").get<std::string>());
        for (const auto& m : j.value("knowledge", nlohmann::json::array({"none", "raw", "summarized"})))
            cfg.matrix.knowledge_modes.push_back(parse_knowledge_mode(m.get<std::string>()));
        for (const auto& c : j.value("context", nlohmann::json::array({"with", "without"}))) {
            if (c.is_boolean()) {
                cfg.matrix.contexts.push_back(c.get<bool>());
                continue;
            }
            const auto t = to_lower(c.get<std::string>());
            if (t != "with" && t != "without")
                throw HarnessError(ErrorKind::validation, "context must be with or without, got " + t);
            cfg.matrix.contexts.push_back(t == "with");
        }
        for (const auto& s : j.value("scheme", nlohmann::json::array({"raw_scheme", "cot"})))
            cfg.matrix.schemes.push_back(parse_scheme(s.get<std::string>()));
        cfg.matrix.k = j.value("k", static_cast<int>(kDefaultTopK));
        cfg.matrix.none_repeats = j.value("none_repeats", kDefaultNoneRepeats);
        if (j.contains("knowledge_base")) cfg.knowledge_dir = resolve(j["knowledge_base"].get<std::string>());
        if (j.contains("function_index")) cfg.function_index = resolve(j["function_index"].get<std::string>());
        if (j.contains("graph")) cfg.graph = resolve(j["graph"].get<std::string>());
        if (j.contains("providers")) cfg.providers = resolve(j["providers"].get<std::string>());
        cfg.embedder = j.value("embedder", cfg.embedder);
        if (j.contains("annotator")) cfg.annotator = j["annotator"].get<std::string>();
        cfg.workers = j.value("workers", cfg.workers);
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::validation, path.string() + ": " + e.what());
    }
    cfg.matrix.cases = load_cases(cfg.cases_path);
    cfg.matrix.validate();
    return cfg;
}

}  // namespace vulnharness
