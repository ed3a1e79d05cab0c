#include <algorithm>
#include <map>
#include <set>

#include "vulnharness/context.hpp"
#include "vulnharness/io.hpp"

namespace vulnharness {

std::vector<std::string> CallGraph::callees(std::string_view caller) const {
    std::vector<std::string> out;
    const auto first = edges.lower_bound({std::string(caller), std::string()});
    for (auto it = first; it != edges.end() && it->first == caller; ++it) out.push_back(it->second);
    return out;
}

CallGraph build_call_graph(const std::vector<FunctionRecord>& functions) {
    CallGraph graph;
    std::map<std::string, std::vector<const FunctionRecord*>> by_simple;
    for (const auto& f : functions) {
        graph.nodes.insert(f.qualified_name);
        by_simple[f.simple_name()].push_back(&f);
    }
    for (const auto& f : functions) {
        const auto own_container = f.container();
        std::set<std::string> distinct(f.called_names.begin(), f.called_names.end());
        for (const auto& name : distinct) {
            const auto it = by_simple.find(name);
            if (it == by_simple.end()) {
                ++graph.unresolved_calls;
                continue;
            }
            std::vector<const FunctionRecord*> local;
            for (const auto* g : it->second)
                if (g->container() == own_container) local.push_back(g);
            const auto& chosen = local.empty() ? it->second : local;
            for (const auto* g : chosen) graph.edges.emplace(f.qualified_name, g->qualified_name);
        }
    }
    return graph;
}

size_t estimate_tokens(std::string_view text) {
    return (text.size() + kCharsPerToken - 1) / kCharsPerToken;
}

std::string ContextBundle::render() const {
    std::string out;
    auto emit = [&](const FunctionRecord& f) {
        if (!out.empty()) out += "\n\n";
        out += "// " + f.qualified_name + "\n" + f.source_text;
    };
    for (const auto& f : report_linked_code) emit(f);
    for (const auto& f : callees) emit(f);
    return out;
}

namespace {

const FunctionRecord* find_record(const std::vector<FunctionRecord>& functions,
                                  std::string_view name) {
    for (const auto& f : functions)
        if (f.qualified_name == name) return &f;
    for (const auto& f : functions)
        if (f.simple_name() == name) return &f;
    return nullptr;
}

std::optional<std::string> case_function_name(const TargetCase& target) {
    if (target.function_name) return target.function_name;
    const auto parsed = parse_source(target.code, target.language);
    if (parsed.functions.empty()) return std::nullopt;
    // parse_source sorts by name; take the first definition in source order instead
    const auto first = std::min_element(
        parsed.functions.begin(), parsed.functions.end(),
        [](const auto& a, const auto& b) { return a.start_line < b.start_line; });
    return first->simple_name();
}

}  // namespace

ContextBundle context_for_case(const TargetCase& target, const CallGraph& graph,
                               const std::vector<FunctionRecord>& functions,
                               size_t budget_tokens) {
    std::vector<const FunctionRecord*> ordered;
    std::set<std::string> taken;

    for (const auto& name : target.report_functions) {
        const auto* rec = find_record(functions, name);
        if (rec && taken.insert(rec->qualified_name).second) ordered.push_back(rec);
    }
    const size_t report_count = ordered.size();

    std::string node;
    if (const auto fname = case_function_name(target)) {
        if (graph.nodes.count(*fname)) {
            node = *fname;
        } else {
            for (const auto& n : graph.nodes) {
                const auto* rec = find_record(functions, n);
                if (rec && rec->simple_name() == *fname) {
                    node = n;
                    break;
                }
            }
        }
    }
    if (!node.empty()) {
        auto names = graph.callees(node);  // sorted: edges is an ordered set
        for (const auto& name : names) {
            if (name == node) continue;
            const auto* rec = find_record(functions, name);
            if (rec && taken.insert(rec->qualified_name).second) ordered.push_back(rec);
        }
    }

    ContextBundle bundle;
    size_t used = 0;
    for (size_t i = 0; i < ordered.size(); ++i) {
        const size_t cost = estimate_tokens(ordered[i]->source_text);
        if (used + cost > budget_tokens) {
            bundle.truncated = true;
            break;
        }
        used += cost;
        (i < report_count ? bundle.report_linked_code : bundle.callees).push_back(*ordered[i]);
    }
    return bundle;
}

std::string_view tool_name(ToolKind kind) {
    switch (kind) {
        case ToolKind::function_definition: return "getFunctionDefinition";
        case ToolKind::class_inheritance: return "getClassInheritance";
        case ToolKind::variable_definition: return "getVariableDefinition";
    }
    return "?";
}

ToolKind parse_tool_kind(std::string_view text) {
    for (auto kind : {ToolKind::function_definition, ToolKind::class_inheritance,
                      ToolKind::variable_definition}) {
        if (text == tool_name(kind)) return kind;
    }
    if (text == "function_definition") return ToolKind::function_definition;
    if (text == "class_inheritance") return ToolKind::class_inheritance;
    if (text == "variable_definition") return ToolKind::variable_definition;
    throw HarnessError(ErrorKind::validation, "unknown lookup kind: " + std::string(text));
}

std::string tool_lookup(ToolKind kind, std::string_view name, const SourceIndex& corpus) {
    auto not_found = [&](std::string_view what) {
        return std::string(kToolNotFound) + ": no " + std::string(what) + " named '" +
               std::string(name) + "'";
    };
    auto simple = [](std::string_view q) {
        const auto dot = q.find_last_of(".:");
        return dot == std::string_view::npos ? q : q.substr(dot + 1);
    };
    switch (kind) {
        case ToolKind::function_definition: {
            const auto* f = corpus.find_function(name);
            return f ? f->source_text : not_found("function");
        }
        case ToolKind::class_inheritance: {
            const ContainerRecord* found = nullptr;
            for (const auto& c : corpus.containers)
                if (c.qualified_name == name) found = found ? found : &c;
            for (const auto& c : corpus.containers)
                if (!found && simple(c.qualified_name) == name) found = &c;
            if (!found) return not_found("class or contract");
            if (found->parents.empty()) return found->qualified_name + " has no parents";
            std::string out = found->qualified_name + " inherits from: ";
            for (size_t i = 0; i < found->parents.size(); ++i) {
                if (i) out += ", ";
                out += found->parents[i];
            }
            return out;
        }
        case ToolKind::variable_definition: {
            for (const auto& v : corpus.variables)
                if (v.qualified_name == name) return v.source_text;
            for (const auto& v : corpus.variables)
                if (simple(v.qualified_name) == name) return v.source_text;
            return not_found("variable");
        }
    }
    return not_found("entity");
}

std::string tool_lookup(std::string_view kind, std::string_view name, const SourceIndex& corpus) {
    return tool_lookup(parse_tool_kind(kind), name, corpus);
}

nlohmann::json context_tool_schemas() {
    auto schema = [](ToolKind kind, const char* description, const char* param_doc) {
        return nlohmann::json{
            {"type", "function"},
            {"function",
             {{"name", tool_name(kind)},
              {"description", description},
              {"parameters",
               {{"type", "object"},
                {"properties", {{"name", {{"type", "string"}, {"description", param_doc}}}}},
                {"required", {"name"}}}}}}};
    };
    return nlohmann::json::array(
        {schema(ToolKind::function_definition,
                "Return the full source code of a function defined in the project.",
                "Function name, optionally qualified with its contract or class."),
         schema(ToolKind::class_inheritance,
                "Return the parent contracts or classes of a contract or class.",
                "Contract or class name."),
         schema(ToolKind::variable_definition,
                "Return the declaration of a state variable or field.",
                "Variable name, optionally qualified with its contract or class.")});
}

nlohmann::json to_json(const FunctionRecord& f) {
    return {{"record", "function"},
            {"qualified_name", f.qualified_name},
            {"language", to_string(f.language)},
            {"source_text", f.source_text},
            {"file", f.file.string()},
            {"span", {f.start_line, f.end_line}},
            {"calls", f.called_names}};
}

FunctionRecord function_record_from_json(const nlohmann::json& j) {
    FunctionRecord f;
    f.qualified_name = j.at("qualified_name").get<std::string>();
    f.language = parse_language(j.at("language").get<std::string>());
    f.source_text = j.at("source_text").get<std::string>();
    f.file = j.at("file").get<std::string>();
    f.start_line = j.at("span").at(0).get<int>();
    f.end_line = j.at("span").at(1).get<int>();
    f.called_names = j.value("calls", std::vector<std::string>{});
    return f;
}

void save_graph(const std::filesystem::path& path, const CallGraph& graph) {
    std::vector<nlohmann::json> rows;
    std::set<std::string> has_edge;
    for (const auto& [caller, callee] : graph.edges) {
        rows.push_back({{"caller", caller}, {"callee", callee}});
        has_edge.insert(caller);
        has_edge.insert(callee);
    }
    // isolated nodes are kept as rows with a null callee
    for (const auto& node : graph.nodes)
        if (!has_edge.count(node)) rows.push_back({{"caller", node}, {"callee", nullptr}});
    write_jsonl(path, rows);
}

CallGraph load_graph(const std::filesystem::path& path) {
    CallGraph graph;
    for (const auto& row : read_jsonl(path)) {
        auto caller = row.at("caller").get<std::string>();
        graph.nodes.insert(caller);
        if (row.at("callee").is_null()) continue;
        auto callee = row.at("callee").get<std::string>();
        graph.nodes.insert(caller);
        graph.nodes.insert(callee);
        graph.edges.emplace(std::move(caller), std::move(callee));
    }
    return graph;
}

void save_function_index(const std::filesystem::path& path, const SourceIndex& index) {
    std::vector<nlohmann::json> rows;
    for (const auto& f : index.functions) rows.push_back(to_json(f));
    for (const auto& c : index.containers) {
        rows.push_back({{"record", "container"},
                        {"qualified_name", c.qualified_name},
                        {"parents", c.parents},
                        {"file", c.file.string()},
                        {"line", c.line}});
    }
    for (const auto& v : index.variables) {
        rows.push_back({{"record", "variable"},
                        {"qualified_name", v.qualified_name},
                        {"source_text", v.source_text},
                        {"file", v.file.string()},
                        {"line", v.line}});
    }
    write_jsonl(path, rows);
}

SourceIndex load_function_index(const std::filesystem::path& path) {
    SourceIndex index;
    for (const auto& row : read_jsonl(path)) {
        const auto kind = row.value("record", "function");
        if (kind == "function") {
            index.functions.push_back(function_record_from_json(row));
        } else if (kind == "container") {
            index.containers.push_back({row.at("qualified_name").get<std::string>(),
                                        row.at("parents").get<std::vector<std::string>>(),
                                        row.at("file").get<std::string>(),
                                        row.at("line").get<int>()});
        } else if (kind == "variable") {
            index.variables.push_back({row.at("qualified_name").get<std::string>(),
                                       row.at("source_text").get<std::string>(),
                                       row.at("file").get<std::string>(),
                                       row.at("line").get<int>()});
        }
    }
    return index;
}

}  // namespace vulnharness
