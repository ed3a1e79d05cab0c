#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vulnharness/annotation.hpp"
#include "vulnharness/context.hpp"
#include "vulnharness/embedder.hpp"
#include "vulnharness/knowledge.hpp"
#include "vulnharness/llm.hpp"
#include "vulnharness/prompt.hpp"
#include "vulnharness/target_case.hpp"

namespace vulnharness {

inline constexpr int kDefaultNoneRepeats = 3;

struct ScenarioMatrix {
    std::vector<TargetCase> cases;
    std::vector<KnowledgeMode> knowledge_modes;
    std::vector<bool> contexts;  // true = with context
    std::vector<SchemeKind> schemes;
    int k = static_cast<int>(kDefaultTopK);
    int none_repeats = kDefaultNoneRepeats;

    /// Throws validation for empty or duplicated dimensions and non-positive k/repeats.
    void validate() const;
    size_t scenario_count() const;
    /// Planned trials: ranks 1..k for each knowledge mode plus one trial for `none`.
    size_t trial_count() const;
    /// Model conversations: like trial_count but the `none` trial counts none_repeats times.
    size_t execution_count() const;
};

/// One planned trial. A `none` trial has rank 0 and runs `repeats` times; the others
/// fix one retrieval rank and run once.
struct TrialSpec {
    size_t case_index = 0;
    std::string case_id;
    PromptScheme cell;
    int rank = 0;
    int repeats = 1;
};

/// Enumerates trials case by case, then mode, context, scheme and rank, in matrix order.
std::vector<TrialSpec> plan(const ScenarioMatrix& matrix);

struct TrialRecord {
    std::string case_id;
    Language language = Language::solidity;
    bool ground_truth_vulnerable = false;
    KnowledgeMode knowledge_mode = KnowledgeMode::none;
    int rank = 0;
    int repeat = 1;
    bool context = false;
    SchemeKind scheme = SchemeKind::raw_scheme;
    std::string model_id;
    std::string fingerprint;
    std::string knowledge_item_id;
    std::optional<Verdict> verdict;
    std::optional<AnnotatedOutcome> outcome;
    std::optional<ErrorKind> error_kind;
    std::string error_message;
    std::string started_at;
    std::string finished_at;
    Usage usage;  // target model only, tool rounds included

    bool ok() const { return outcome.has_value(); }
    /// case|mode|rank|repeat|ctx|scheme|model
    std::string key() const;
};

nlohmann::json to_json(const TrialRecord& r, bool include_timestamps = true);
TrialRecord trial_record_from_json(const nlohmann::json& j);

/// Records sorted by key, one JSON line each, timestamps left out. Two runs of the same
/// plan with the same mocks produce identical strings.
std::string canonical_records(std::vector<TrialRecord> records);

/// Pins what a run depends on. Resuming against a different corpus, knowledge base,
/// call graph, template set, model or seed is refused.
struct RunManifest {
    std::string corpus_hash;
    std::map<std::string, std::string> store_hashes;
    std::string templates_hash;
    int64_t seed = 0;
    std::string model_id;

    bool operator==(const RunManifest&) const = default;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const nlohmann::json& j);

std::string corpus_hash(const std::vector<TargetCase>& cases);
std::string knowledge_hash(const KnowledgeBase& kb, EmbedMode mode);
std::string graph_hash(const CallGraph& graph, const SourceIndex& corpus);
std::string templates_hash();

/// What trials read besides the case itself. Pointers may be null when the matrix does
/// not need them (no knowledge modes, no context cells).
struct RunResources {
    const KnowledgeBase* knowledge = nullptr;
    Embedder* embedder = nullptr;
    const CallGraph* graph = nullptr;
    const SourceIndex* corpus = nullptr;
    LlmGateway* gateway = nullptr;
    LlmHandle annotator;
    // Model used for case functionality summaries; defaults to the annotator.
    std::optional<LlmHandle> summarizer;
};

struct ExecuteOptions {
    std::filesystem::path out_dir;
    int workers = 4;
    std::optional<int64_t> seed;  // unset: reuse the manifest seed, else draw from the clock
    double abort_error_rate = 0.10;
    size_t abort_min_trials = 20;
    // Checked before each trial starts; in-flight trials finish and are persisted.
    const std::atomic<bool>* stop = nullptr;
    std::function<void(const TrialRecord&)> on_record;
};

struct ExecuteResult {
    std::vector<TrialRecord> records;  // everything in the log after this run, by key
    size_t executed = 0;
    size_t skipped = 0;
    size_t errors = 0;
    bool stopped = false;
    RunManifest manifest;
};

inline constexpr std::string_view kRunLogName = "runs.jsonl";
inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kSummariesName = "case_summaries.jsonl";

/// Runs every pending trial of `specs` through retrieval, context, assembly, the model,
/// verdict extraction, type matching and classification. Finished trials are appended
/// to the run log as they complete; trials already logged without error are skipped.
/// Per-trial failures become error records. When more than `abort_error_rate` of at
/// least `abort_min_trials` trials fail, remaining work is cancelled and run_aborted is
/// thrown.
ExecuteResult execute(const std::vector<TrialSpec>& specs, const std::vector<TargetCase>& cases,
                      const LlmHandle& model, const RunResources& resources,
                      const ExecuteOptions& options);

/// Latest record per key from a run log. A torn final line is ignored. Two records for
/// one key with different fingerprints are a manifest_drift error.
std::vector<TrialRecord> load_run_log(const std::filesystem::path& path);

// ---- reporting -------------------------------------------------------------------------

enum class Dimension { knowledge, context, scheme, model, language, rank };

std::string_view to_string(Dimension d);
/// Throws unknown_dimension.
Dimension parse_dimension(std::string_view text);
std::vector<Dimension> parse_dimensions(std::string_view comma_list);

std::string dimension_value(const TrialRecord& r, Dimension d);

struct Baseline {
    Dimension dimension = Dimension::knowledge;
    std::string value;
};

/// "none" picks the grouped dimension whose values include it; "context=without" is
/// explicit.
Baseline parse_baseline(std::string_view text, const std::vector<Dimension>& group_by,
                        const std::vector<TrialRecord>& records);

struct ReportRow {
    std::vector<std::string> group;
    Counts counts;
    MetricsReport metrics;
    int64_t errors = 0;
    // Percentage-point differences to the baseline row; unset when either side is undefined.
    std::optional<double> delta_precision;
    std::optional<double> delta_recall;
    std::optional<double> delta_f1;
    bool has_baseline = false;
};

struct ReportTable {
    std::vector<Dimension> group_by;
    std::optional<Baseline> baseline;
    std::vector<ReportRow> rows;

    std::string to_text() const;
    std::string to_csv() const;
};

/// Counts per group, error records tallied separately. Rows follow the natural order of
/// each dimension (none, raw, summarized; with, without; raw, cot).
ReportTable report(const std::vector<TrialRecord>& records, const std::vector<Dimension>& group_by,
                   const std::optional<Baseline>& baseline = std::nullopt);

// ---- matrix config ---------------------------------------------------------------------

/// Declarative run description read by the command line tool. Relative paths resolve
/// against the config file's directory.
struct MatrixConfig {
    ScenarioMatrix matrix;
    std::filesystem::path cases_path;
    std::optional<std::filesystem::path> knowledge_dir;
    std::optional<std::filesystem::path> function_index;
    std::optional<std::filesystem::path> graph;
    std::optional<std::filesystem::path> providers;
    std::string embedder = "hash-256";
    std::optional<std::string> annotator;
    int workers = 4;
};

MatrixConfig load_matrix_config(const std::filesystem::path& path);

}  // namespace vulnharness
