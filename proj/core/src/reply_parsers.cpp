#include "sceneforge/reply_parsers.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <initializer_list>
#include <regex>
#include <sstream>
#include <vector>

namespace sceneforge {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::optional<int> word_number(const std::string& w, int max) {
  static const std::array<std::array<const char*, 3>, 10> kNames{{
      {"1", "one", "first"},  {"2", "two", "second"}, {"3", "three", "third"},
      {"4", "four", "fourth"}, {"5", "five", "fifth"}, {"6", "six", "sixth"},
      {"7", "seven", "seventh"}, {"8", "eight", "eighth"}, {"9", "nine", "ninth"},
      {"10", "ten", "tenth"},
  }};
  static const std::array<const char*, 4> kShortOrdinals{"1st", "2nd", "3rd", "4th"};
  for (int n = 1; n <= std::min<int>(max, 10); ++n) {
    for (const char* name : kNames[n - 1])
      if (w == name) return n;
    if (n <= 4 && w == kShortOrdinals[n - 1]) return n;
  }
  return std::nullopt;
}

bool one_of(const std::string& w, std::initializer_list<const char*> list) {
  return std::find_if(list.begin(), list.end(), [&](const char* n) { return w == n; }) != list.end();
}

bool is_reference_noun(const std::string& w) {
  return one_of(w, {"image", "view", "picture", "photo", "render", "rendering", "option", "number",
                    "candidate", "img"});
}

// "4 images", "all four views": a count, not a choice.
bool is_count_noun(const std::string& w) {
  return one_of(w, {"images", "views", "pictures", "photos", "renders", "renderings", "options",
                    "candidates", "angles", "sides"});
}

// Prefers a number that follows "image"/"view"/...; falls back to the first
// number mentioned that is not a count. A stray "one" is read as a pronoun
// ("the blue one") unless it is the whole reply.
std::optional<int> extract_index(std::string_view text, int max) {
  const auto ws = words(text);
  for (std::size_t i = 0; i + 1 < ws.size(); ++i) {
    if (!is_reference_noun(ws[i])) continue;
    if (auto n = word_number(ws[i + 1], max)) return n;
  }
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (i + 1 < ws.size() && is_count_noun(ws[i + 1])) continue;
    if (ws[i] == "one" && ws.size() > 1) continue;
    if (auto n = word_number(ws[i], max)) return n;
  }
  return std::nullopt;
}

json parse_json_object(std::string_view text) {
  auto block = extract_json_block(text);
  if (!block) throw ReplyParseError("reply contains no JSON object");
  json value = json::parse(*block, nullptr, false);
  if (value.is_discarded()) throw ReplyParseError("reply JSON is malformed");
  if (!value.is_object()) throw ReplyParseError("reply JSON must be an object");
  return value;
}

enum class Section { physical, functional, contextual };

// Recognizes "(1) Physical properties: ...", "**Functional Properties**",
// "### 3. Contextual" and similar. Returns the section and any text after
// the header on the same line.
std::optional<std::pair<Section, std::string>> match_header(const std::string& line) {
  static const std::regex kHeader(
      R"(^[\s#*>_-]*(?:\(?[1-3][.):]?\)?\s*)?[*_]*\s*(physical|functional|contextual)(?:\s+(?:properties|property|attributes|characteristics|description|context))?(?:\s*\([^)]*\))?\s*[*_]*\s*(?::|-|–|$)\s*[*_]*(.*)$)",
      std::regex::icase);
  std::smatch m;
  if (!std::regex_match(line, m, kHeader)) return std::nullopt;
  const std::string key = lower(m[1].str());
  const Section s = key == "physical"     ? Section::physical
                    : key == "functional" ? Section::functional
                                          : Section::contextual;
  return std::make_pair(s, trim(m[2].str()));
}

const char* section_key(Section s) {
  switch (s) {
    case Section::physical: return "physical";
    case Section::functional: return "functional";
    case Section::contextual: return "contextual";
  }
  return "";
}

}  // namespace

std::optional<std::string> extract_json_block(std::string_view text) {
  static const std::regex kFence(R"(```(?:json|JSON)?[ \t]*\r?\n([\s\S]*?)```)");
  const std::string owned(text);
  std::smatch m;
  if (std::regex_search(owned, m, kFence)) {
    const std::string body = trim(m[1].str());
    if (!body.empty() && (body.front() == '{' || body.front() == '[')) return body;
  }
  const auto open = owned.find('{');
  const auto close = owned.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  return owned.substr(open, close - open + 1);
}

std::optional<int> extract_view_index(std::string_view text) { return extract_index(text, 4); }

json parse_caption_sections(std::string_view text) {
  json out = json::object();
  std::optional<Section> current;
  std::map<Section, std::string> buffers;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto header = match_header(line)) {
      current = header->first;
      auto& buf = buffers[*current];
      if (!header->second.empty()) {
        if (!buf.empty()) buf.push_back('\n');
        buf += header->second;
      }
      continue;
    }
    if (!current) continue;
    auto& buf = buffers[*current];
    if (!buf.empty()) buf.push_back('\n');
    buf += line;
  }
  for (const auto& [section, body] : buffers) {
    std::string cleaned = trim(body);
    if (!cleaned.empty()) out[section_key(section)] = cleaned;
  }
  return out;
}

std::optional<int> parse_vote(std::string_view text) {
  if (auto block = extract_json_block(text)) {
    const json value = json::parse(*block, nullptr, false);
    if (value.is_object() && value.contains("selection")) {
      const auto& s = value["selection"];
      if (s.is_null()) return std::nullopt;
      if (s.is_number_integer()) {
        if (s.get<int>() == 0) return std::nullopt;
        return s.get<int>();
      }
      throw ReplyParseError("vote selection must be an integer or null");
    }
  }
  const std::string low = lower(trim(text));
  static const std::regex kNone(R"(^\W*(none|no match|no suitable|null|n/a|0)\b)");
  if (std::regex_search(low, kNone)) return std::nullopt;
  if (auto n = extract_index(text, 10)) return n;
  if (low.find("none") != std::string::npos || low.find("no suitable") != std::string::npos)
    return std::nullopt;
  throw ReplyParseError("vote reply names no candidate");
}

json parse_reply(RequestKind kind, std::string_view text, const PromptContext& context) {
  switch (kind) {
    case RequestKind::caption:
      return parse_caption_sections(text);
    case RequestKind::orient: {
      auto index = extract_view_index(text);
      if (!index) throw ReplyParseError("reply names no view between 1 and 4");
      return json{{"index", *index}};
    }
    case RequestKind::vote: {
      const auto selection = parse_vote(text);
      if (!selection) return json{{"selection", nullptr}};
      if (auto it = context.find("candidate_count"); it != context.end()) {
        const int count = std::stoi(it->second);
        if (*selection < 1 || *selection > count)
          throw ReplyParseError("selection " + std::to_string(*selection) + " is outside 1.." +
                                std::to_string(count));
      }
      return json{{"selection", *selection}};
    }
    case RequestKind::embed:
      throw ReplyParseError("embedding requests have no text reply");
    case RequestKind::extract_objects:
    case RequestKind::extract_constraints:
    case RequestKind::order:
    case RequestKind::place:
    case RequestKind::refine:
      return parse_json_object(text);
  }
  throw ReplyParseError("unknown request kind");
}

}  // namespace sceneforge
