#pragma once

#include <string_view>

#include <nlohmann/json.hpp>

namespace geovocab {

/// Pulls the first JSON value out of free-form model output.
///
/// Tried in order: the whole (trimmed) text; the body of each fenced code
/// block; then every '{' / '[' in the text, scanned by bracket depth with
/// string-literal awareness until a balanced span parses.
///
/// Throws NoJsonFound when nothing parses, UnbalancedJson when an opening
/// bracket is never closed and no other candidate parses.
nlohmann::json extract_json(std::string_view text);

}  // namespace geovocab
