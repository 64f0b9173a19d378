#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "geovocab/error.hpp"
#include "geovocab/gateway.hpp"

namespace geovocab {

/// Versioned prompt templates loaded from a directory of `<name>.txt` files,
/// plus JSON response schemas under `schemas/<id>.json`. Leading lines that
/// start with "##" are metadata (e.g. "## version: 1") and are not rendered.
/// Placeholders use `{{name}}`.
class PromptLibrary {
 public:
  explicit PromptLibrary(std::filesystem::path dir);

  /// GEOVOCAB_PROMPT_DIR when set, otherwise the directory baked in at build time.
  static std::filesystem::path default_dir();

  const std::filesystem::path& dir() const noexcept { return dir_; }
  /// Throws PromptTemplateError for a missing template or an unbound placeholder.
  std::string render(const std::string& name, const std::map<std::string, std::string>& vars) const;
  std::string version(const std::string& name) const;
  /// Schema text shown to the model on repair rounds.
  std::string schema(const std::string& schema_id) const;

 private:
  struct Template {
    std::string version;
    std::string body;
  };
  const Template& get(const std::string& name) const;

  std::filesystem::path dir_;
  std::map<std::string, Template> templates_;
  std::map<std::string, std::string> schemas_;
};

std::string render_template(const std::string& body, const std::map<std::string, std::string>& vars);

/// Shared settings for every model-backed stage.
struct StageSettings {
  std::shared_ptr<const PromptLibrary> prompts;
  double temperature = 0.0;
  int max_tokens = 1024;

  static StageSettings from_dir(const std::filesystem::path& prompt_dir);
  /// Request skeleton with the system prompt, sampling settings and schema id filled in.
  ChatRequest make_request(std::string schema_id) const;
};

/// Outcome of one structured exchange with the model.
struct StructuredReply {
  nlohmann::json value;
  Backend backend = Backend::Mock;
  std::string raw_text;
  std::string prompt;
  int rounds = 1;
};

/// Why a reply was rejected; `code` overrides the caller's malformed code.
struct ReplyProblem {
  ReplyProblem(std::string message) : message(std::move(message)) {}  // NOLINT(google-explicit-constructor)
  ReplyProblem(std::string message, ErrorCode code) : message(std::move(message)), code(code) {}

  std::string message;
  std::optional<ErrorCode> code;
};

/// Returns the problem with an unusable reply, nullopt when acceptable.
using ReplyCheck = std::function<std::optional<ReplyProblem>(const nlohmann::json&)>;

/// Sends the request, extracts JSON and checks it. On an unusable reply sends
/// exactly one repair round carrying the schema and the problem; a second
/// failure raises the problem's code, or `malformed`. Gateway errors propagate
/// untouched.
StructuredReply request_structured(Gateway& gateway, const StageSettings& settings, ChatRequest request,
                                   const ReplyCheck& check, ErrorCode malformed);

/// Concatenated text parts of a request (what the model was asked).
std::string request_text(const ChatRequest& request);

}  // namespace geovocab
