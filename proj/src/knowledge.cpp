#include "vulnharness/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "vulnharness/io.hpp"
#include "vulnharness/lexer.hpp"
#include "vulnharness/templates.hpp"

namespace vulnharness {

std::string_view to_string(EmbedMode mode) {
    return mode == EmbedMode::code ? "code" : "functionality";
}

EmbedMode parse_embed_mode(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "code") return EmbedMode::code;
    if (t == "functionality" || t == "func") return EmbedMode::functionality;
    throw HarnessError(ErrorKind::validation, "unknown embedding mode: " + std::string(text));
}

std::string_view to_string(KnowledgeSource source) {
    return source == KnowledgeSource::audit_report ? "audit_report" : "cwe_synthesized";
}

KnowledgeSource parse_knowledge_source(std::string_view text) {
    if (text == "audit_report") return KnowledgeSource::audit_report;
    if (text == "cwe_synthesized") return KnowledgeSource::cwe_synthesized;
    throw HarnessError(ErrorKind::validation, "unknown knowledge source: " + std::string(text));
}

void KnowledgeItem::validate() const {
    if (id.empty()) throw HarnessError(ErrorKind::validation, "knowledge item id is empty");
    if (report_text.empty())
        throw HarnessError(ErrorKind::validation, "knowledge item " + id + ": report_text is empty");
    if (!key_concept.empty() && functionality.empty())
        throw HarnessError(ErrorKind::validation,
                           "knowledge item " + id + ": key_concept set without functionality");
    if (code_embedding.size() && functionality_embedding.size() &&
        code_embedding.size() != functionality_embedding.size())
        throw HarnessError(ErrorKind::dimension_mismatch,
                           "knowledge item " + id + ": embeddings differ in dimension");
}

nlohmann::json to_json(const KnowledgeItem& item) {
    return {{"id", item.id},
            {"language", to_string(item.language)},
            {"report_text", item.report_text},
            {"vulnerable_code", item.vulnerable_code},
            {"functionality", item.functionality},
            {"key_concept", item.key_concept},
            {"source", to_string(item.source)}};
}

KnowledgeItem knowledge_item_from_json(const nlohmann::json& j) {
    KnowledgeItem item;
    try {
        item.id = j.at("id").get<std::string>();
        item.language = parse_language(j.at("language").get<std::string>());
        item.report_text = j.at("report_text").get<std::string>();
        item.vulnerable_code = j.value("vulnerable_code", "");
        item.functionality = j.value("functionality", "");
        item.key_concept = j.value("key_concept", "");
        item.source = parse_knowledge_source(j.value("source", "audit_report"));
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::validation, std::string("bad knowledge record: ") + e.what());
    }
    item.validate();
    return item;
}

std::string knowledge_id(std::string_view report_text, std::string_view vulnerable_code,
                         Language language) {
    std::string material(to_string(language));
    material += '\0';
    material += report_text;
    material += '\0';
    material += vulnerable_code;
    return "kb-" + sha256_hex(material).substr(0, 16);
}

// ---- KnowledgeBase --------------------------------------------------------------------

namespace {
constexpr const char* kItemsFile = "knowledge.jsonl";
constexpr const char* kVectorsFile = "vectors.jsonl";

Eigen::VectorXf& embedding_slot(KnowledgeItem& item, EmbedMode mode) {
    return mode == EmbedMode::code ? item.code_embedding : item.functionality_embedding;
}
}  // namespace

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& dir) {
    KnowledgeBase kb;
    const auto items_path = dir / kItemsFile;
    if (!std::filesystem::exists(items_path)) return kb;
    for (const auto& row : read_jsonl(items_path)) kb.upsert(knowledge_item_from_json(row));

    const auto vectors_path = dir / kVectorsFile;
    if (!std::filesystem::exists(vectors_path)) return kb;
    for (const auto& row : read_jsonl(vectors_path)) {
        const auto id = row.at("id").get<std::string>();
        const auto mode = parse_embed_mode(row.at("mode").get<std::string>());
        const auto dim = row.at("dim").get<Eigen::Index>();
        auto values = row.at("values").get<std::vector<float>>();
        if (static_cast<Eigen::Index>(values.size()) != dim)
            throw HarnessError(ErrorKind::dimension_mismatch,
                               vectors_path.string() + ": vector for " + id + " declares dim " +
                                   std::to_string(dim) + " but has " +
                                   std::to_string(values.size()) + " values");
        auto it = std::find_if(kb.items_.begin(), kb.items_.end(),
                               [&](const KnowledgeItem& i) { return i.id == id; });
        if (it == kb.items_.end())
            throw HarnessError(ErrorKind::validation,
                               vectors_path.string() + ": vector for unknown item " + id);
        auto& store = mode == EmbedMode::code ? kb.code_store_ : kb.functionality_store_;
        if (!store) store.emplace(dim, mode);
        Eigen::Map<const Eigen::VectorXf> v(values.data(), dim);
        store->upsert(id, v);
        embedding_slot(*it, mode) = v;
    }
    return kb;
}

void KnowledgeBase::save(const std::filesystem::path& dir) const {
    std::vector<nlohmann::json> rows;
    rows.reserve(items_.size());
    for (const auto& item : items_) rows.push_back(to_json(item));
    write_jsonl(dir / kItemsFile, rows);

    std::vector<nlohmann::json> vectors;
    for (const auto* store : {&code_store_, &functionality_store_}) {
        if (!*store) continue;
        const auto& s = **store;
        for (size_t i = 0; i < s.size(); ++i) {
            const auto r = s.row(i);
            vectors.push_back({{"id", s.ids()[i]},
                               {"mode", to_string(s.mode())},
                               {"dim", s.dimension()},
                               {"values", std::vector<float>(r.data(), r.data() + r.size())}});
        }
    }
    write_jsonl(dir / kVectorsFile, vectors);
}

const KnowledgeItem* KnowledgeBase::find(std::string_view id) const {
    for (const auto& item : items_)
        if (item.id == id) return &item;
    return nullptr;
}

KnowledgeItem& KnowledgeBase::upsert(KnowledgeItem item) {
    item.validate();
    for (auto& existing : items_) {
        if (existing.id == item.id) {
            existing = std::move(item);
            return existing;
        }
    }
    items_.push_back(std::move(item));
    return items_.back();
}

bool KnowledgeBase::has_store(EmbedMode mode) const {
    return (mode == EmbedMode::code ? code_store_ : functionality_store_).has_value();
}

const VectorStore& KnowledgeBase::store(EmbedMode mode) const {
    const auto& s = mode == EmbedMode::code ? code_store_ : functionality_store_;
    if (!s)
        throw HarnessError(ErrorKind::precondition,
                           "no " + std::string(to_string(mode)) + " vector store; run the embed step");
    return *s;
}

void KnowledgeBase::set_store(VectorStore store) {
    auto& slot = store.mode() == EmbedMode::code ? code_store_ : functionality_store_;
    slot.emplace(std::move(store));
}

const VectorStore& KnowledgeBase::embed(Embedder& embedder, EmbedMode mode) {
    auto store = embed_items(items_, embedder, mode);
    for (auto& item : items_) embedding_slot(item, mode) = store.vector_of(item.id).transpose();
    set_store(std::move(store));
    return this->store(mode);
}

std::vector<RetrievedKnowledge> KnowledgeBase::retrieve(
    const Eigen::Ref<const Eigen::VectorXf>& query, KnowledgeMode mode, size_t k) const {
    if (mode == KnowledgeMode::none)
        throw HarnessError(ErrorKind::precondition, "retrieval needs knowledge mode raw or summarized");
    const auto embed_mode = mode == KnowledgeMode::raw ? EmbedMode::code : EmbedMode::functionality;
    auto out = vulnharness::retrieve(query, store(embed_mode), k);
    for (auto& r : out) {
        const auto* item = find(r.item_id);
        if (!item) throw HarnessError(ErrorKind::validation, "store references unknown item " + r.item_id);
        r.payload = mode == KnowledgeMode::raw ? item->report_text : item->key_concept;
    }
    return out;
}

const KnowledgeItem& ingest_report(KnowledgeBase& kb, std::string report_text,
                                   std::string vulnerable_code, Language language,
                                   KnowledgeSource source) {
    if (trim(report_text).empty())
        throw HarnessError(ErrorKind::validation, "cannot ingest an empty report");
    KnowledgeItem item;
    item.id = knowledge_id(report_text, vulnerable_code, language);
    item.language = language;
    item.report_text = std::move(report_text);
    item.vulnerable_code = std::move(vulnerable_code);
    item.source = source;
    return kb.upsert(std::move(item));
}

// ---- summaries ------------------------------------------------------------------------

namespace {

std::string fenced(std::string_view code) {
    std::string out = "```\n";
    out += code;
    if (!code.empty() && code.back() != '\n') out += '\n';
    return out + "```";
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool contains_word(std::string_view text, std::string_view word) {
    for (size_t pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
        const bool left = pos == 0 || !is_word_char(text[pos - 1]);
        const size_t end = pos + word.size();
        const bool right = end >= text.size() || !is_word_char(text[end]);
        if (left && right) return true;
    }
    return false;
}

}  // namespace

PromptBundle functionality_prompt(std::string_view report_text, std::string_view code) {
    std::string user(templates::kSummarizeFunctionality);
    if (!report_text.empty()) {
        user += "\n\nVulnerability description:\n";
        user += report_text;
    }
    user += "\n\nCode:\n" + fenced(code);
    return make_bundle("", std::move(user));
}

PromptBundle root_cause_prompt(std::string_view report_text, std::string_view code) {
    std::string user(templates::kSummarizeRootCause);
    user += "\n\nVulnerability report:\n";
    user += report_text;
    user += "\n\nVulnerableCode:\n" + fenced(code);
    return make_bundle("", std::move(user));
}

std::string parse_functionality(std::string_view response) {
    const auto lower = to_lower(response);
    const auto pos = lower.find("functionality:");
    auto body = pos == std::string::npos ? trim(response)
                                         : trim(response.substr(pos + std::string_view("functionality:").size()));
    if (body.empty()) throw HarnessError(ErrorKind::malformed_summary, "empty functionality summary");
    return body;
}

std::vector<std::string> distinctive_identifiers(std::string_view code, Language language) {
    std::set<std::string> out;
    for (const auto& t : tokenize(code, language).tokens) {
        if (t.kind != TokenKind::identifier || t.text.size() < 4) continue;
        if (is_builtin_name(t.text, language)) continue;
        const bool underscore = t.text.find('_') != std::string::npos;
        const bool digit = std::any_of(t.text.begin(), t.text.end(),
                                       [](unsigned char c) { return std::isdigit(c); });
        const bool inner_capital = std::any_of(t.text.begin() + 1, t.text.end(),
                                               [](unsigned char c) { return std::isupper(c); });
        if (underscore || digit || inner_capital) out.insert(t.text);
    }
    return {out.begin(), out.end()};
}

std::string parse_key_concept(std::string_view response, std::string_view code, Language language) {
    const auto lower = to_lower(response);
    auto pos = lower.find("keyconcept");
    if (pos == std::string::npos)
        throw HarnessError(ErrorKind::malformed_summary, "root-cause summary lacks the KeyConcept marker");
    pos += std::string_view("keyconcept").size();
    while (pos < response.size() && (response[pos] == ' ' || response[pos] == '*')) ++pos;
    if (pos >= response.size() || response[pos] != ':')
        throw HarnessError(ErrorKind::malformed_summary, "root-cause summary lacks the KeyConcept marker");
    auto body = trim(response.substr(pos + 1));
    if (body.size() >= 2 && body.front() == '[' && body.back() == ']')
        body = trim(std::string_view(body).substr(1, body.size() - 2));
    if (body.empty()) throw HarnessError(ErrorKind::malformed_summary, "KeyConcept is empty");
    for (const auto& ident : distinctive_identifiers(code, language)) {
        if (contains_word(body, ident))
            throw HarnessError(ErrorKind::malformed_summary,
                               "KeyConcept names code identifier '" + ident + "'");
    }
    return "KeyConcept: " + body;
}

KnowledgeItem summarize_item(const KnowledgeItem& item, LlmGateway& gateway, const LlmHandle& handle) {
    if (item.summarized()) return item;
    if (item.report_text.empty())
        throw HarnessError(ErrorKind::precondition, "knowledge item " + item.id + " has no report");
    KnowledgeItem out = item;
    if (out.functionality.empty()) {
        const auto ex = gateway.complete(handle, functionality_prompt(item.report_text, item.vulnerable_code));
        out.functionality = parse_functionality(ex.response_text);
    }
    const auto ex = gateway.complete(handle, root_cause_prompt(item.report_text, item.vulnerable_code));
    out.key_concept = parse_key_concept(ex.response_text, item.vulnerable_code, item.language);
    return out;
}

// ---- embedding and retrieval ----------------------------------------------------------

std::string embedding_text(const KnowledgeItem& item, EmbedMode mode) {
    if (mode == EmbedMode::functionality) return item.functionality;
    return item.report_text + "\n" + item.vulnerable_code;
}

VectorStore embed_items(const std::vector<KnowledgeItem>& items, Embedder& embedder, EmbedMode mode) {
    VectorStore store(embedder.dimension(), mode);
    for (const auto& item : items) {
        if (mode == EmbedMode::functionality && !item.summarized())
            throw HarnessError(ErrorKind::precondition,
                               "knowledge item " + item.id + " is not summarized");
        const Eigen::VectorXf v = embedder.embed(embedding_text(item, mode));
        if (v.size() != store.dimension())
            throw HarnessError(ErrorKind::dimension_mismatch,
                               "embedder " + embedder.id() + " returned " + std::to_string(v.size()) +
                                   " values for item " + item.id + ", expected " +
                                   std::to_string(store.dimension()));
        store.upsert(item.id, v);
    }
    return store;
}

std::vector<RetrievedKnowledge> retrieve(const Eigen::Ref<const Eigen::VectorXf>& query,
                                         const VectorStore& store, size_t k) {
    const auto mode = store.mode() == EmbedMode::code ? KnowledgeMode::raw : KnowledgeMode::summarized;
    std::vector<RetrievedKnowledge> out;
    for (auto& s : store.top_k(query, k)) out.push_back({std::move(s.id), s.rank, s.score, mode, ""});
    return out;
}

void ensure_case_summary(TargetCase& target, LlmGateway& gateway, const LlmHandle& handle) {
    if (target.functionality_summary && !target.functionality_summary->empty()) return;
    const auto ex = gateway.complete(handle, functionality_prompt("", target.code));
    target.functionality_summary = parse_functionality(ex.response_text);
}

std::vector<RetrievedKnowledge> retrieve_for_case(const TargetCase& target, KnowledgeMode mode,
                                                  const KnowledgeBase& kb, Embedder& embedder,
                                                  size_t k) {
    if (mode == KnowledgeMode::raw) return kb.retrieve(embedder.embed(target.code), mode, k);
    if (mode == KnowledgeMode::summarized) {
        if (!target.functionality_summary || target.functionality_summary->empty())
            throw HarnessError(ErrorKind::precondition,
                               "case " + target.id + " has no functionality summary");
        return kb.retrieve(embedder.embed(*target.functionality_summary), mode, k);
    }
    throw HarnessError(ErrorKind::precondition, "retrieval needs knowledge mode raw or summarized");
}

}  // namespace vulnharness
