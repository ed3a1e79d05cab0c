#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "vulnharness/common.hpp"
#include "vulnharness/embedder.hpp"
#include "vulnharness/llm.hpp"
#include "vulnharness/target_case.hpp"
#include "vulnharness/vector_store.hpp"

namespace vulnharness {

enum class KnowledgeSource { audit_report, cwe_synthesized };

std::string_view to_string(KnowledgeSource source);
KnowledgeSource parse_knowledge_source(std::string_view text);

struct KnowledgeItem {
    std::string id;
    Language language = Language::solidity;
    std::string report_text;
    std::string vulnerable_code;
    std::string functionality;  // imperative-mood summary of the vulnerable code
    std::string key_concept;    // "KeyConcept: ..." root-cause abstract
    KnowledgeSource source = KnowledgeSource::audit_report;
    Eigen::VectorXf code_embedding;           // size 0 when unset
    Eigen::VectorXf functionality_embedding;  // size 0 when unset

    bool summarized() const { return !functionality.empty() && !key_concept.empty(); }
    void validate() const;
};

nlohmann::json to_json(const KnowledgeItem& item);
KnowledgeItem knowledge_item_from_json(const nlohmann::json& j);

/// Content-derived id so re-ingesting the same report is idempotent.
std::string knowledge_id(std::string_view report_text, std::string_view vulnerable_code,
                         Language language);

struct RetrievedKnowledge {
    std::string item_id;
    int rank = 0;
    float score = 0.0f;
    KnowledgeMode mode = KnowledgeMode::raw;
    std::string payload;  // report text (raw) or key concept (summarized)
};

/// Items plus their two vector stores, persisted as knowledge.jsonl and vectors.jsonl.
class KnowledgeBase {
public:
    KnowledgeBase() = default;

    static KnowledgeBase load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    const std::vector<KnowledgeItem>& items() const { return items_; }
    const KnowledgeItem* find(std::string_view id) const;
    KnowledgeItem& upsert(KnowledgeItem item);

    bool has_store(EmbedMode mode) const;
    const VectorStore& store(EmbedMode mode) const;
    void set_store(VectorStore store);

    /// Embeds every item for `mode`, records vectors on the items, and installs the store.
    const VectorStore& embed(Embedder& embedder, EmbedMode mode);

    std::vector<RetrievedKnowledge> retrieve(const Eigen::Ref<const Eigen::VectorXf>& query,
                                             KnowledgeMode mode, size_t k) const;

private:
    std::vector<KnowledgeItem> items_;
    std::optional<VectorStore> code_store_;
    std::optional<VectorStore> functionality_store_;
};

/// Adds a report to `kb`. Summaries and embeddings start unset.
const KnowledgeItem& ingest_report(KnowledgeBase& kb, std::string report_text,
                                   std::string vulnerable_code, Language language,
                                   KnowledgeSource source = KnowledgeSource::audit_report);

// Summary prompts: the fixed instruction followed by the material it refers to.
PromptBundle functionality_prompt(std::string_view report_text, std::string_view code);
PromptBundle root_cause_prompt(std::string_view report_text, std::string_view code);

/// Text after "Functionality:" (or the whole answer when the heading is absent), trimmed.
std::string parse_functionality(std::string_view response);

/// Extracts "KeyConcept: ..." from a response. Throws malformed_summary when the marker
/// is missing, the concept is empty, or it names a distinctive identifier of `code`.
std::string parse_key_concept(std::string_view response, std::string_view code, Language language);

/// Identifiers from `code` specific enough that their appearance in prose is a leak:
/// at least four characters and containing an underscore, a digit, or an inner capital.
std::vector<std::string> distinctive_identifiers(std::string_view code, Language language);

/// Fills functionality and key_concept through two model calls. Already-summarized items
/// are returned unchanged without calling the model. On a malformed answer the input is
/// left untouched and malformed_summary is thrown.
KnowledgeItem summarize_item(const KnowledgeItem& item, LlmGateway& gateway,
                             const LlmHandle& handle);

/// Text embedded for `mode`: report followed by code for `code`, the functionality
/// summary for `functionality`.
std::string embedding_text(const KnowledgeItem& item, EmbedMode mode);

/// One vector per item. Throws precondition for unsummarized items in functionality
/// mode and dimension_mismatch naming the item when the embedder misbehaves.
VectorStore embed_items(const std::vector<KnowledgeItem>& items, Embedder& embedder,
                        EmbedMode mode);

inline constexpr size_t kDefaultTopK = 3;

std::vector<RetrievedKnowledge> retrieve(const Eigen::Ref<const Eigen::VectorXf>& query,
                                         const VectorStore& store, size_t k);

/// Computes the case functionality summary once and caches it on the case.
void ensure_case_summary(TargetCase& target, LlmGateway& gateway, const LlmHandle& handle);

/// Raw mode embeds the case code against the code store; summarized mode embeds the
/// cached functionality summary against the functionality store.
std::vector<RetrievedKnowledge> retrieve_for_case(const TargetCase& target, KnowledgeMode mode,
                                                  const KnowledgeBase& kb, Embedder& embedder,
                                                  size_t k = kDefaultTopK);

}  // namespace vulnharness
