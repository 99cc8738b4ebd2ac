#pragma once

// Turns raw model text into the JSON value each request kind is validated
// against. Free-text kinds (caption, orient, vote) use lenient grammars; all
// other kinds expect a JSON object, preferably inside a ```json fence.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "sceneforge/model_provider.hpp"

namespace sceneforge {

class ReplyParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ReplyParseError when the text has no usable structure.
nlohmann::json parse_reply(RequestKind kind, std::string_view text, const PromptContext& context);

// First fenced ```json block, else the outermost {...} span.
std::optional<std::string> extract_json_block(std::string_view text);

// First mention of a number 1..4 as digits, a number word or an ordinal
// ("3", "image two", "the third view").
std::optional<int> extract_view_index(std::string_view text);

// Sections found under physical / functional / contextual headers. Missing
// sections are absent from the returned object.
nlohmann::json parse_caption_sections(std::string_view text);

// 1-based selection, or nullopt for an explicit "none". Throws
// ReplyParseError when neither is recognizable.
std::optional<int> parse_vote(std::string_view text);

}  // namespace sceneforge
