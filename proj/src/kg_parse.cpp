#include "ctieval/kg_parse.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <regex>

#include <json.hpp>

#include "ctieval/errors.hpp"

namespace ctieval::kg {

using nlohmann::json;

std::string to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::repaired: return "repaired";
    case ParseStatus::failed: return "failed";
  }
  return "?";
}

AliasTable load_aliases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw LoadError("invalid JSON in " + path.string() + ": " + e.what());
  }
  AliasTable table;
  for (const auto& [variant, canonical] : doc.items())
    table[fold_term(variant)] = fold_term(canonical.get<std::string>());
  return table;
}

Canon normalize_entity(const std::string& raw, EntityClass entity_class,
                       const ClosedWorldVocabulary& vocab,
                       const AliasTable* aliases) {
  if (raw.empty()) throw std::invalid_argument("cannot normalize an empty value");

  if (entity_class == EntityClass::cve) {
    static const std::regex pat(R"(\s*[Cc][Vv][Ee][-_ ]?(\d{4})[-_ ](\d{4,7})\s*)");
    std::smatch m;
    if (std::regex_match(raw, m, pat))
      return Canon{"CVE-" + m[1].str() + "-" + m[2].str(), true};
    return Canon{fold_term(raw), false};
  }

  std::string folded = fold_term(raw);
  if (aliases) {
    auto it = aliases->find(folded);
    if (it != aliases->end()) folded = it->second;
  }
  if (entity_class == EntityClass::apt || entity_class == EntityClass::campaign)
    return Canon{folded, true};
  return Canon{folded, vocab.contains(entity_class, folded)};
}

std::optional<PartialDate> parse_partial_date(const std::string& raw) {
  static const std::map<std::string, int> kMonths = {
      {"january", 1},   {"february", 2}, {"march", 3},    {"april", 4},
      {"may", 5},       {"june", 6},     {"july", 7},     {"august", 8},
      {"september", 9}, {"october", 10}, {"november", 11}, {"december", 12},
      {"jan", 1},       {"feb", 2},      {"mar", 3},      {"apr", 4},
      {"jun", 6},       {"jul", 7},      {"aug", 8},      {"sep", 9},
      {"oct", 10},      {"nov", 11},     {"dec", 12}};

  const std::string s = fold_term(raw);
  if (s.empty()) return std::nullopt;

  std::smatch m;
  static const std::regex ymd(R"((\d{4})-(\d{1,2})-(\d{1,2}))");
  static const std::regex ym(R"((\d{4})-(\d{1,2}))");
  static const std::regex y(R"((\d{4}))");
  static const std::regex month_year(R"(([a-z]+) (\d{4}))");
  static const std::regex month_day_year(R"(([a-z]+) (\d{1,2}),? (\d{4}))");
  static const std::regex day_month_year(R"((\d{1,2}) ([a-z]+) (\d{4}))");

  PartialDate d;
  if (std::regex_match(s, m, ymd)) {
    d.year = std::stoi(m[1]);
    d.month = std::stoi(m[2]);
    d.day = std::stoi(m[3]);
  } else if (std::regex_match(s, m, ym)) {
    d.year = std::stoi(m[1]);
    d.month = std::stoi(m[2]);
  } else if (std::regex_match(s, m, y)) {
    d.year = std::stoi(m[1]);
  } else if (std::regex_match(s, m, month_year)) {
    auto it = kMonths.find(m[1]);
    if (it == kMonths.end()) return std::nullopt;
    d.year = std::stoi(m[2]);
    d.month = it->second;
  } else if (std::regex_match(s, m, month_day_year)) {
    auto it = kMonths.find(m[1]);
    if (it == kMonths.end()) return std::nullopt;
    d.year = std::stoi(m[3]);
    d.month = it->second;
    d.day = std::stoi(m[2]);
  } else if (std::regex_match(s, m, day_month_year)) {
    auto it = kMonths.find(m[2]);
    if (it == kMonths.end()) return std::nullopt;
    d.year = std::stoi(m[3]);
    d.month = it->second;
    d.day = std::stoi(m[1]);
  } else {
    return std::nullopt;
  }
  if (!d.valid()) return std::nullopt;
  return d;
}

// ---------------------------------------------------------------------------
// Value-span scanning. The candidate text has already parsed as JSON, so the
// scanner only has to track positions, not validate.

namespace {

struct ScalarSpan {
  std::string path;  // "nodes.APT.0.name"
  size_t begin = 0;  // value content range; string content excludes quotes
  size_t end = 0;
};

class SpanScanner {
 public:
  explicit SpanScanner(std::string_view text) : text_(text) {}

  std::vector<ScalarSpan> scan() {
    pos_ = 0;
    out_.clear();
    value("");
    return std::move(out_);
  }

 private:
  void ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  std::pair<size_t, size_t> lex_string() {
    ++pos_;  // opening quote
    size_t b = pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') ++pos_;
      ++pos_;
    }
    size_t e = pos_;
    if (pos_ < text_.size()) ++pos_;  // closing quote
    return {b, e};
  }

  void value(const std::string& path) {
    ws();
    if (pos_ >= text_.size()) return;
    char ch = text_[pos_];
    if (ch == '{') {
      object(path);
    } else if (ch == '[') {
      array(path);
    } else if (ch == '"') {
      auto [b, e] = lex_string();
      out_.push_back({path, b, e});
    } else {
      size_t b = pos_;
      while (pos_ < text_.size() && !std::strchr(",}] \t\r\n", text_[pos_])) ++pos_;
      out_.push_back({path, b, pos_});
    }
  }

  void object(const std::string& path) {
    ++pos_;
    ws();
    if (pos_ < text_.size() && text_[pos_] == '}') {
      ++pos_;
      return;
    }
    for (;;) {
      ws();
      if (pos_ >= text_.size() || text_[pos_] != '"') return;
      auto [kb, ke] = lex_string();
      std::string key(text_.substr(kb, ke - kb));
      ws();
      if (pos_ < text_.size() && text_[pos_] == ':') ++pos_;
      value(path.empty() ? key : path + "." + key);
      ws();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (pos_ < text_.size() && text_[pos_] == '}') ++pos_;
      return;
    }
  }

  void array(const std::string& path) {
    ++pos_;
    ws();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return;
    }
    for (int index = 0;; ++index) {
      value(path + "." + std::to_string(index));
      ws();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (pos_ < text_.size() && text_[pos_] == ']') ++pos_;
      return;
    }
  }

  std::string_view text_;
  size_t pos_ = 0;
  std::vector<ScalarSpan> out_;
};

// A parsed candidate region within the raw response text.
struct Candidate {
  bool parsed = false;
  json doc;
  size_t base = 0;  // offset of the candidate within the response text
  bool repaired = false;
  std::vector<std::string> diagnostics;
};

bool try_parse(const std::string& text, json& doc) {
  try {
    doc = json::parse(text);
    return true;
  } catch (const json::parse_error&) {
    return false;
  }
}

// Lenient repair is limited by design: fence stripping and balanced-brace
// substring extraction only. Anything heavier would mask the model failure
// modes this harness measures.
Candidate parse_candidate(const std::string& text, Strictness strictness) {
  Candidate c;
  if (try_parse(text, c.doc)) {
    c.parsed = true;
    return c;
  }
  if (strictness == Strictness::strict) {
    c.diagnostics.push_back("response is not schema-conformant JSON");
    return c;
  }

  // Markdown code fences.
  size_t fence = text.find("```");
  if (fence != std::string::npos) {
    size_t content_start = text.find('\n', fence);
    if (content_start != std::string::npos) {
      ++content_start;
      size_t fence_end = text.find("```", content_start);
      if (fence_end != std::string::npos) {
        std::string inner = text.substr(content_start, fence_end - content_start);
        if (try_parse(inner, c.doc)) {
          c.parsed = true;
          c.repaired = true;
          c.base = content_start;
          c.diagnostics.push_back("stripped markdown code fences");
          return c;
        }
      }
    }
  }

  // Balanced-brace substring (ignores braces inside strings).
  size_t open = text.find('{');
  if (open != std::string::npos) {
    int depth = 0;
    bool in_string = false;
    for (size_t i = open; i < text.size(); ++i) {
      char ch = text[i];
      if (in_string) {
        if (ch == '\\')
          ++i;
        else if (ch == '"')
          in_string = false;
        continue;
      }
      if (ch == '"') in_string = true;
      if (ch == '{') ++depth;
      if (ch == '}') {
        --depth;
        if (depth == 0) {
          std::string inner = text.substr(open, i - open + 1);
          if (try_parse(inner, c.doc)) {
            c.parsed = true;
            c.repaired = true;
            c.base = open;
            c.diagnostics.push_back("extracted balanced JSON substring");
          }
          break;
        }
      }
    }
  }
  if (!c.parsed) c.diagnostics.push_back("no parseable JSON found in response");
  return c;
}

// Token boundary offsets; offsets[i] is the start character of token i.
std::vector<size_t> token_offsets(const std::vector<gateway::TokenLogProb>& tokens) {
  std::vector<size_t> offsets(tokens.size() + 1, 0);
  for (size_t i = 0; i < tokens.size(); ++i)
    offsets[i + 1] = offsets[i] + tokens[i].token_text.size();
  return offsets;
}

std::optional<FieldSpan> align_span(const std::vector<size_t>& offsets,
                                    size_t char_begin, size_t char_end) {
  auto b = std::lower_bound(offsets.begin(), offsets.end(), char_begin);
  auto e = std::lower_bound(offsets.begin(), offsets.end(), char_end);
  if (b == offsets.end() || *b != char_begin) return std::nullopt;
  if (e == offsets.end() || *e != char_end) return std::nullopt;
  FieldSpan span;
  span.token_begin = static_cast<int>(b - offsets.begin());
  span.token_end = static_cast<int>(e - offsets.begin());
  span.char_begin = char_begin;
  span.char_end = char_end;
  if (span.token_end <= span.token_begin) return std::nullopt;
  return span;
}

// Signals a shape violation; fatal in strict mode, a skipped field in
// lenient mode.
struct ShapeError {
  std::string message;
};

enum class ElementShape { object_only, string_only, either };

// Reads one entity list element ("value", {"name": "value"} or
// {"id": "value"}) and returns the value plus the dom path suffix where it
// lives. Shape violations throw; the caller decides whether that fails the
// parse (strict) or skips the element (lenient).
std::pair<std::string, std::string> entity_element(const json& element,
                                                   const char* object_key,
                                                   ElementShape shape) {
  if (element.is_object()) {
    if (shape == ElementShape::string_only)
      throw ShapeError{"entity element must be a plain string"};
    if (element.contains(object_key) && element.at(object_key).is_string())
      return {element.at(object_key).get<std::string>(),
              std::string(".") + object_key};
    throw ShapeError{std::string("entity object missing string '") + object_key +
                     "'"};
  }
  if (element.is_string()) {
    if (shape == ElementShape::object_only)
      throw ShapeError{"entity element must be an object"};
    return {element.get<std::string>(), std::string()};
  }
  throw ShapeError{"entity element has unsupported type"};
}

struct SpanIndex {
  std::map<std::string, std::pair<size_t, size_t>> by_path;
  const std::vector<size_t>* offsets = nullptr;
  bool usable = false;

  void attach(std::map<std::string, FieldSpan>& field_spans,
              const std::string& dom_path, const std::string& field_key,
              std::vector<std::string>& diagnostics) const {
    if (!usable) return;
    auto it = by_path.find(dom_path);
    if (it == by_path.end()) return;
    auto span = align_span(*offsets, it->second.first, it->second.second);
    if (!span) {
      diagnostics.push_back("token span misaligned for field " + field_key);
      return;
    }
    if (span->char_begin == span->char_end) return;  // empty value, no span
    field_spans[field_key] = *span;
  }
};

}  // namespace

std::vector<Canon> ExtractionGraph::cve_set() const {
  std::vector<Canon> out;
  for (const auto& v : cves) out.push_back(v.canon);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Canon> ExtractionGraph::attack_vector_set() const {
  std::vector<Canon> out;
  for (const auto& v : attack_vectors) out.push_back(v.canon);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Canon> GenerationGraph::label_set() const {
  std::vector<Canon> out;
  for (const auto& v : labels) out.push_back(v.canon);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Canon> GenerationGraph::goal_set() const {
  std::vector<Canon> out;
  for (const auto& v : goals) out.push_back(v.canon);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Canon> GenerationGraph::cve_set() const {
  std::vector<Canon> out;
  for (const auto& v : cves) out.push_back(v.canon);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Canon> GenerationGraph::attack_vector_set() const {
  std::vector<Canon> out;
  for (const auto& v : attack_vectors) out.push_back(v.canon);
  std::sort(out.begin(), out.end());
  return out;
}

bool graphs_equal(const ExtractionGraph& a, const ExtractionGraph& b) {
  auto apt_of = [](const ExtractionGraph& g) -> std::optional<Canon> {
    if (!g.apt) return std::nullopt;
    return g.apt->canon;
  };
  return apt_of(a) == apt_of(b) && a.campaign_start == b.campaign_start &&
         a.cve_set() == b.cve_set() && a.attack_vector_set() == b.attack_vector_set();
}

bool graphs_equal(const GenerationGraph& a, const GenerationGraph& b) {
  auto country_of = [](const GenerationGraph& g) -> std::optional<Canon> {
    if (!g.country) return std::nullopt;
    return g.country->canon;
  };
  return country_of(a) == country_of(b) && a.label_set() == b.label_set() &&
         a.goal_set() == b.goal_set() && a.cve_set() == b.cve_set() &&
         a.attack_vector_set() == b.attack_vector_set();
}

ParseOutcome<ExtractionGraph> parse_extraction(const gateway::ModelResponse& response,
                                               const ClosedWorldVocabulary& vocab,
                                               Strictness strictness,
                                               const AliasTable* aliases) {
  ParseOutcome<ExtractionGraph> out;
  if (response.text.empty()) {
    out.diagnostics.push_back("empty response text");
    return out;
  }

  Candidate cand = parse_candidate(response.text, strictness);
  out.diagnostics = cand.diagnostics;
  if (!cand.parsed) return out;

  SpanIndex spans;
  std::vector<size_t> offsets;
  if (response.tokens) {
    offsets = token_offsets(*response.tokens);
    spans.offsets = &offsets;
    spans.usable = true;
    SpanScanner scanner(
        std::string_view(response.text).substr(cand.base));
    for (auto& s : scanner.scan())
      spans.by_path[s.path] = {s.begin + cand.base, s.end + cand.base};
  }

  ExtractionGraph g;
  try {
    if (!cand.doc.is_object()) throw ShapeError{"top-level value is not an object"};
    if (!cand.doc.contains("nodes") && !cand.doc.empty())
      out.diagnostics.push_back("missing 'nodes' wrapper; no fields read");
    if (cand.doc.contains("nodes")) {
      const json& nodes = cand.doc.at("nodes");
      if (!nodes.is_object()) throw ShapeError{"'nodes' is not an object"};

      const ElementShape shape = strictness == Strictness::strict
                                     ? ElementShape::object_only
                                     : ElementShape::either;

      if (nodes.contains("APT")) {
        const json& apt = nodes.at("APT");
        if (!apt.is_array()) throw ShapeError{"'APT' is not an array"};
        for (size_t i = 0; i < apt.size(); ++i) {
          std::pair<std::string, std::string> element;
          try {
            element = entity_element(apt[i], "name", shape);
          } catch (const ShapeError& e) {
            if (strictness == Strictness::strict) throw;
            out.diagnostics.push_back("skipped APT element: " + e.message);
            continue;
          }
          if (element.first.empty()) continue;
          if (g.apt) {
            out.diagnostics.push_back("extra APT prediction ignored: " +
                                      element.first);
            continue;
          }
          PredictedValue v;
          v.raw = element.first;
          v.canon = normalize_entity(v.raw, EntityClass::apt, vocab, aliases);
          v.field = "APT[0]";
          spans.attach(g.field_spans,
                       "nodes.APT." + std::to_string(i) + element.second, v.field,
                       out.diagnostics);
          g.apt = std::move(v);
        }
      }

      if (nodes.contains("campaign_start")) {
        const json& start = nodes.at("campaign_start");
        if (!start.is_string()) throw ShapeError{"'campaign_start' is not a string"};
        g.campaign_start_raw = start.get<std::string>();
        if (!g.campaign_start_raw.empty()) {
          g.campaign_start = parse_partial_date(g.campaign_start_raw);
          if (!g.campaign_start)
            out.diagnostics.push_back("unparseable campaign_start date: " +
                                      g.campaign_start_raw);
          spans.attach(g.field_spans, "nodes.campaign_start", "campaign_start",
                       out.diagnostics);
        }
      }

      auto read_set = [&](const char* key, const char* object_key,
                          EntityClass cls, std::vector<PredictedValue>& dst) {
        if (!nodes.contains(key)) return;
        const json& arr = nodes.at(key);
        if (!arr.is_array())
          throw ShapeError{std::string("'") + key + "' is not an array"};
        std::vector<Canon> seen;
        for (size_t i = 0; i < arr.size(); ++i) {
          std::pair<std::string, std::string> element;
          try {
            element = entity_element(arr[i], object_key, shape);
          } catch (const ShapeError& e) {
            if (strictness == Strictness::strict) throw;
            out.diagnostics.push_back(std::string("skipped ") + key +
                                      " element: " + e.message);
            continue;
          }
          if (element.first.empty()) continue;
          PredictedValue v;
          v.raw = element.first;
          v.canon = normalize_entity(v.raw, cls, vocab, aliases);
          if (std::find(seen.begin(), seen.end(), v.canon) != seen.end()) {
            out.diagnostics.push_back(std::string("duplicate ") + key +
                                      " value: " + v.raw);
            continue;
          }
          seen.push_back(v.canon);
          v.field = std::string(key) + "[" + std::to_string(dst.size()) + "]";
          spans.attach(g.field_spans,
                       std::string("nodes.") + key + "." + std::to_string(i) +
                           element.second,
                       v.field, out.diagnostics);
          dst.push_back(std::move(v));
        }
      };
      read_set("CVE", "id", EntityClass::cve, g.cves);
      read_set("attack_vector", "name", EntityClass::attack_vector,
               g.attack_vectors);
    }
  } catch (const ShapeError& e) {
    out.diagnostics.push_back(e.message);
    out.graph.reset();
    out.status = ParseStatus::failed;
    return out;
  }

  out.graph = std::move(g);
  out.status = cand.repaired ? ParseStatus::repaired : ParseStatus::ok;
  return out;
}

ParseOutcome<GenerationGraph> parse_generation(const gateway::ModelResponse& response,
                                               const ClosedWorldVocabulary& vocab,
                                               Strictness strictness,
                                               const AliasTable* aliases) {
  ParseOutcome<GenerationGraph> out;
  if (response.text.empty()) {
    out.diagnostics.push_back("empty response text");
    return out;
  }

  Candidate cand = parse_candidate(response.text, strictness);
  out.diagnostics = cand.diagnostics;
  if (!cand.parsed) return out;

  SpanIndex spans;
  std::vector<size_t> offsets;
  if (response.tokens) {
    offsets = token_offsets(*response.tokens);
    spans.offsets = &offsets;
    spans.usable = true;
    SpanScanner scanner(std::string_view(response.text).substr(cand.base));
    for (auto& s : scanner.scan())
      spans.by_path[s.path] = {s.begin + cand.base, s.end + cand.base};
  }

  GenerationGraph g;
  try {
    if (!cand.doc.is_object()) throw ShapeError{"top-level value is not an object"};

    if (cand.doc.contains("country")) {
      const json& country = cand.doc.at("country");
      if (!country.is_string()) throw ShapeError{"'country' is not a string"};
      std::string raw = country.get<std::string>();
      if (!raw.empty()) {
        PredictedValue v;
        v.raw = raw;
        v.canon = normalize_entity(raw, EntityClass::country, vocab, aliases);
        v.field = "country";
        spans.attach(g.field_spans, "country", v.field, out.diagnostics);
        g.country = std::move(v);
      }
    }

    const ElementShape shape = strictness == Strictness::strict
                                   ? ElementShape::string_only
                                   : ElementShape::either;
    auto read_set = [&](const char* key, EntityClass cls,
                        std::vector<PredictedValue>& dst, const char* object_key) {
      if (!cand.doc.contains(key)) return;
      const json& arr = cand.doc.at(key);
      if (!arr.is_array())
        throw ShapeError{std::string("'") + key + "' is not an array"};
      std::vector<Canon> seen;
      for (size_t i = 0; i < arr.size(); ++i) {
        std::pair<std::string, std::string> element;
        try {
          element = entity_element(arr[i], object_key, shape);
        } catch (const ShapeError& e) {
          if (strictness == Strictness::strict) throw;
          out.diagnostics.push_back(std::string("skipped ") + key +
                                    " element: " + e.message);
          continue;
        }
        if (element.first.empty()) continue;
        PredictedValue v;
        v.raw = element.first;
        v.canon = normalize_entity(v.raw, cls, vocab, aliases);
        if (std::find(seen.begin(), seen.end(), v.canon) != seen.end()) {
          out.diagnostics.push_back(std::string("duplicate ") + key +
                                    " value: " + v.raw);
          continue;
        }
        seen.push_back(v.canon);
        v.field = std::string(key) + "[" + std::to_string(dst.size()) + "]";
        spans.attach(g.field_spans,
                     std::string(key) + "." + std::to_string(i) + element.second,
                     v.field, out.diagnostics);
        dst.push_back(std::move(v));
      }
    };
    read_set("labels", EntityClass::labels, g.labels, "name");
    read_set("goals", EntityClass::goals, g.goals, "name");
    read_set("CVE", EntityClass::cve, g.cves, "id");
    read_set("attack_vector", EntityClass::attack_vector, g.attack_vectors, "name");
  } catch (const ShapeError& e) {
    out.diagnostics.push_back(e.message);
    out.graph.reset();
    out.status = ParseStatus::failed;
    return out;
  }

  out.graph = std::move(g);
  out.status = cand.repaired ? ParseStatus::repaired : ParseStatus::ok;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json extraction_schema_json(const std::optional<std::string>& apt,
                            const std::string& campaign_start,
                            const std::vector<std::string>& cves,
                            const std::vector<std::string>& vectors) {
  json apt_arr = json::array();
  if (apt) apt_arr.push_back({{"name", *apt}});
  json cve_arr = json::array();
  for (const auto& c : cves) cve_arr.push_back({{"id", c}});
  json vec_arr = json::array();
  for (const auto& v : vectors) vec_arr.push_back({{"name", v}});
  return json{{"nodes",
               {{"APT", apt_arr},
                {"campaign_start", campaign_start},
                {"CVE", cve_arr},
                {"attack_vector", vec_arr}}}};
}

json generation_schema_json(const std::string& country,
                            const std::vector<std::string>& labels,
                            const std::vector<std::string>& goals,
                            const std::vector<std::string>& cves,
                            const std::vector<std::string>& vectors) {
  return json{{"country", country},
              {"labels", labels},
              {"goals", goals},
              {"CVE", cves},
              {"attack_vector", vectors}};
}

std::vector<std::string> canon_values(const std::vector<PredictedValue>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) out.push_back(v.canon.value);
  return out;
}

}  // namespace

std::string serialize_extraction(const ExtractionGraph& g) {
  std::optional<std::string> apt;
  if (g.apt) apt = g.apt->canon.value;
  return extraction_schema_json(
             apt, g.campaign_start ? g.campaign_start->format() : "",
             canon_values(g.cves), canon_values(g.attack_vectors))
      .dump();
}

std::string serialize_generation(const GenerationGraph& g) {
  return generation_schema_json(g.country ? g.country->canon.value : "",
                                canon_values(g.labels), canon_values(g.goals),
                                canon_values(g.cves),
                                canon_values(g.attack_vectors))
      .dump();
}

std::string extraction_answer_json(const corpus::CampaignTruth& truth) {
  return extraction_schema_json(truth.apt_name, truth.start_date.format(),
                                truth.cves, truth.attack_vectors)
      .dump();
}

std::string generation_answer_json(const corpus::AptProfile& profile) {
  return generation_schema_json(profile.country, profile.labels, profile.goals,
                                profile.cves, profile.attack_vectors)
      .dump();
}

}  // namespace ctieval::kg
