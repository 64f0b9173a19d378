#include "geovocab/json_extract.hpp"

#include <optional>
#include <string>

#include "geovocab/error.hpp"

namespace geovocab {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<json> try_parse(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  auto parsed = json::parse(s.begin(), s.end(), nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

std::optional<json> from_fences(std::string_view text) {
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("```", pos);
    if (open == std::string_view::npos) return std::nullopt;
    // Skip the info string ("json", "JSON", ...) up to the end of the line.
    auto body = text.find('\n', open + 3);
    if (body == std::string_view::npos) return std::nullopt;
    ++body;
    const auto close = text.find("```", body);
    if (close == std::string_view::npos) return try_parse(text.substr(body));
    if (auto parsed = try_parse(text.substr(body, close - body))) return parsed;
    pos = close + 3;
  }
}

// Index one past the bracket closing the one at `start`, or npos.
std::size_t balanced_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

json extract_json(std::string_view text) {
  if (auto whole = try_parse(text)) return *whole;
  if (auto fenced = from_fences(text)) return *fenced;

  bool saw_unbalanced = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' && text[i] != '[') continue;
    const auto end = balanced_end(text, i);
    if (end == std::string_view::npos) {
      saw_unbalanced = true;
      continue;
    }
    if (auto parsed = try_parse(text.substr(i, end - i))) return *parsed;
  }
  if (saw_unbalanced) fail(ErrorCode::UnbalancedJson, "an opening bracket is never closed");
  fail(ErrorCode::NoJsonFound, "no parseable JSON value in model output");
}

}  // namespace geovocab
