#pragma once

// Renders the selection, judging and query-generation prompts from domain
// values. Templates use `{name}` placeholders and `{#flag}...{/flag}`
// optional sections; a section is emitted whole or not at all.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedbroker/builtin_templates.hpp"
#include "fedbroker/error.hpp"
#include "fedbroker/model.hpp"

namespace fedbroker {

enum class TemplateId { Selection, Judging, QueryGen };

inline std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::Selection: return "selection";
    case TemplateId::Judging: return "judging";
    case TemplateId::QueryGen: return "querygen";
  }
  return "selection";
}

inline TemplateId parse_template_id(std::string_view s) {
  static constexpr std::pair<std::string_view, TemplateId> table[] = {
      {"selection", TemplateId::Selection}, {"judging", TemplateId::Judging}, {"querygen", TemplateId::QueryGen}};
  return detail::parse_enum(s, table, "template id");
}

/// Which resource fields go into the selection prompt. Name and URL are
/// always present; description and similar snippets are optional.
struct RepresentationConfig {
  bool use_name_url = true;
  bool use_description = false;
  bool use_similar_snippets = false;
  int snippet_count = 3;

  void validate() const {
    if (!use_name_url) throw Error(ErrorCode::InvalidArgument, "name/url representation cannot be disabled");
    if (use_similar_snippets && snippet_count < 1)
      throw Error(ErrorCode::InvalidArgument, "snippet_count must be >= 1 when snippets are enabled");
  }

  friend bool operator==(const RepresentationConfig&, const RepresentationConfig&) = default;
};

/// Identifies what a prompt is about. Not rendered; backends may key on it.
struct PromptContext {
  std::string resource_id;
  std::string query_id;
  int snippet_rank = 0;
};

struct RenderedPrompt {
  std::string text;
  TemplateId template_id = TemplateId::Selection;
  std::map<std::string, std::string> variable_bindings;
  PromptContext context;
};

// ---------------------------------------------------------------------------
// Template engine

class PromptTemplate {
 public:
  static PromptTemplate parse(std::string_view source) {
    PromptTemplate t;
    std::vector<std::string> open_sections;
    std::string literal;
    auto flush = [&] {
      if (!literal.empty()) t.nodes_.push_back({Node::Literal, std::move(literal)});
      literal.clear();
    };
    for (std::size_t i = 0; i < source.size();) {
      if (source[i] == '{') {
        std::size_t close = source.find('}', i + 1);
        if (close != std::string_view::npos) {
          std::string_view inner = source.substr(i + 1, close - i - 1);
          char sigil = inner.empty() ? '\0' : inner.front();
          std::string_view name = (sigil == '#' || sigil == '/') ? inner.substr(1) : inner;
          if (is_identifier(name)) {
            flush();
            if (sigil == '#') {
              open_sections.emplace_back(name);
              t.nodes_.push_back({Node::SectionOpen, std::string(name)});
            } else if (sigil == '/') {
              if (open_sections.empty() || open_sections.back() != name)
                throw Error(ErrorCode::TemplateError, "unbalanced section close '" + std::string(name) + "'");
              open_sections.pop_back();
              t.nodes_.push_back({Node::SectionClose, std::string(name)});
            } else {
              t.nodes_.push_back({Node::Placeholder, std::string(name)});
            }
            i = close + 1;
            continue;
          }
        }
      }
      literal.push_back(source[i]);
      ++i;
    }
    flush();
    if (!open_sections.empty())
      throw Error(ErrorCode::TemplateError, "unclosed section '" + open_sections.back() + "'");
    return t;
  }

  /// Substitutes in a single pass; substituted values are never rescanned.
  std::string render(const std::map<std::string, std::string>& bindings,
                     const std::set<std::string>& enabled_sections) const {
    std::string out;
    int skip_depth = 0;
    for (const auto& node : nodes_) {
      switch (node.kind) {
        case Node::SectionOpen:
          if (skip_depth > 0 || !enabled_sections.contains(node.value)) ++skip_depth;
          break;
        case Node::SectionClose:
          if (skip_depth > 0) --skip_depth;
          break;
        case Node::Literal:
          if (skip_depth == 0) out += node.value;
          break;
        case Node::Placeholder:
          if (skip_depth == 0) {
            auto it = bindings.find(node.value);
            if (it == bindings.end())
              throw Error(ErrorCode::TemplateError, "no binding for placeholder '{" + node.value + "}'");
            out += it->second;
          }
          break;
      }
    }
    return out;
  }

  std::set<std::string> placeholders() const {
    std::set<std::string> names;
    for (const auto& n : nodes_) {
      if (n.kind == Node::Placeholder) names.insert(n.value);
    }
    return names;
  }

 private:
  struct Node {
    enum Kind { Literal, Placeholder, SectionOpen, SectionClose } kind;
    std::string value;
  };

  static bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
      if (!((c >= 'a' && c <= 'z') || c == '_')) return false;
    }
    return true;
  }

  std::vector<Node> nodes_;
};

/// The three prompt templates. Defaults are compiled in from the
/// `templates/*.tmpl` assets; `from_directory` loads edited copies at runtime.
class TemplateSet {
 public:
  static const TemplateSet& builtin() {
    static const TemplateSet set{PromptTemplate::parse(builtin_templates::kSelection),
                                 PromptTemplate::parse(builtin_templates::kJudging),
                                 PromptTemplate::parse(builtin_templates::kQueryGen)};
    return set;
  }

  /// Missing files fall back to the compiled-in template.
  static TemplateSet from_directory(const std::filesystem::path& dir) {
    auto load = [&](const char* file, std::string_view fallback) {
      std::filesystem::path p = dir / file;
      if (!std::filesystem::exists(p)) return PromptTemplate::parse(fallback);
      std::ifstream in(p, std::ios::binary);
      if (!in) throw Error(ErrorCode::IoError, "cannot read template " + p.string());
      std::stringstream buf;
      buf << in.rdbuf();
      std::string text = buf.str();
      if (!text.empty() && text.back() == '\n') text.pop_back();
      return PromptTemplate::parse(text);
    };
    return TemplateSet{load("selection.tmpl", builtin_templates::kSelection),
                       load("judging.tmpl", builtin_templates::kJudging),
                       load("querygen.tmpl", builtin_templates::kQueryGen)};
  }

  const PromptTemplate& get(TemplateId id) const {
    switch (id) {
      case TemplateId::Selection: return selection_;
      case TemplateId::Judging: return judging_;
      case TemplateId::QueryGen: return querygen_;
    }
    return selection_;
  }

 private:
  TemplateSet(PromptTemplate s, PromptTemplate j, PromptTemplate q)
      : selection_(std::move(s)), judging_(std::move(j)), querygen_(std::move(q)) {}

  PromptTemplate selection_;
  PromptTemplate judging_;
  PromptTemplate querygen_;
};

// ---------------------------------------------------------------------------
// Snippet formatting

inline constexpr std::size_t kSnippetBodyLimit = 512;

/// Truncates to at most `limit` characters (UTF-8 code points), cutting at
/// the last whitespace inside the limit when there is one.
inline std::string truncate_snippet_body(std::string_view body, std::size_t limit = kSnippetBodyLimit) {
  std::size_t chars = 0;
  std::size_t cut = body.size();
  for (std::size_t i = 0; i < body.size(); ++i) {
    if ((static_cast<unsigned char>(body[i]) & 0xC0) == 0x80) continue;
    if (chars == limit) {
      cut = i;
      break;
    }
    ++chars;
  }
  if (cut == body.size()) return std::string(body);

  std::string_view head = body.substr(0, cut);
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  if (!is_space(body[cut])) {
    std::size_t ws = head.find_last_of(" \t\n\r");
    if (ws != std::string_view::npos && ws > 0) head = head.substr(0, ws);
  }
  while (!head.empty() && is_space(head.back())) head.remove_suffix(1);
  return std::string(head);
}

inline std::string format_selection_snippets(std::span<const Snippet> snippets) {
  std::string out;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Snippet " + std::to_string(i + 1) + ": ";
    if (!snippets[i].title.empty()) out += snippets[i].title + " — ";
    out += truncate_snippet_body(snippets[i].body);
  }
  return out;
}

inline std::string format_querygen_snippets(std::span<const Snippet> snippets) {
  std::string out;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Snippet " + std::to_string(i + 1) + ":\n";
    out += "Snippet Title: " + snippets[i].title + "\n";
    out += "Snippet Info:\n" + truncate_snippet_body(snippets[i].body);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt builders

inline RenderedPrompt build_selection_prompt(const Resource& resource, const Query& query,
                                             std::span<const Snippet> similar_snippets,
                                             const RepresentationConfig& config,
                                             const TemplateSet& templates = TemplateSet::builtin()) {
  config.validate();
  std::map<std::string, std::string> bindings{{"name", resource.name}, {"url", resource.url}, {"query", query.text}};
  std::set<std::string> sections;
  if (config.use_description) {
    if (!resource.description || trim(*resource.description).empty())
      throw Error(ErrorCode::MissingDescription, resource.id);
    bindings["description"] = *resource.description;
    sections.insert("description");
  }
  if (config.use_similar_snippets) {
    if (similar_snippets.empty()) throw Error(ErrorCode::MissingSnippets, resource.id);
    auto used = similar_snippets.first(std::min<std::size_t>(similar_snippets.size(), config.snippet_count));
    bindings["similar_sampled_snippets"] = format_selection_snippets(used);
    sections.insert("snippets");
  }
  RenderedPrompt prompt;
  prompt.text = templates.get(TemplateId::Selection).render(bindings, sections);
  prompt.template_id = TemplateId::Selection;
  prompt.variable_bindings = std::move(bindings);
  prompt.context = {resource.id, query.id, 0};
  return prompt;
}

inline RenderedPrompt build_judging_prompt(const Query& query, const Snippet& snippet,
                                           const TemplateSet& templates = TemplateSet::builtin()) {
  if (trim(snippet.body).empty())
    throw Error(ErrorCode::EmptySnippet,
                snippet.resource_id + "/" + snippet.query_id + "/" + std::to_string(snippet.rank));
  std::string rendered_snippet = snippet.title.empty() ? std::string() : snippet.title + "\n";
  rendered_snippet += truncate_snippet_body(snippet.body);

  std::map<std::string, std::string> bindings{{"query", query.text}, {"snippet", std::move(rendered_snippet)}};
  RenderedPrompt prompt;
  prompt.text = templates.get(TemplateId::Judging).render(bindings, {});
  prompt.template_id = TemplateId::Judging;
  prompt.variable_bindings = std::move(bindings);
  prompt.context = {snippet.resource_id, query.id, snippet.rank};
  return prompt;
}

inline constexpr std::size_t kQueryGenSnippetCount = 3;

inline RenderedPrompt build_querygen_prompt(const Query& adhoc, std::span<const Snippet> nav_snippets,
                                            const TemplateSet& templates = TemplateSet::builtin()) {
  if (nav_snippets.size() != kQueryGenSnippetCount)
    throw Error(ErrorCode::WrongSnippetCount,
                "expected 3 navigational snippets, got " + std::to_string(nav_snippets.size()));
  std::map<std::string, std::string> bindings{{"query", adhoc.text},
                                              {"snippets", format_querygen_snippets(nav_snippets)}};
  RenderedPrompt prompt;
  prompt.text = templates.get(TemplateId::QueryGen).render(bindings, {});
  prompt.template_id = TemplateId::QueryGen;
  prompt.variable_bindings = std::move(bindings);
  prompt.context = {"", adhoc.id, 0};
  return prompt;
}

}  // namespace fedbroker
