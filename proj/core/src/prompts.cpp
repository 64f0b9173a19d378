#include "geovocab/prompts.hpp"

#include <cstdlib>
#include <sstream>

#include "geovocab/file_util.hpp"
#include "geovocab/json_extract.hpp"

#ifndef GEOVOCAB_DEFAULT_PROMPT_DIR
#define GEOVOCAB_DEFAULT_PROMPT_DIR "prompts"
#endif

namespace geovocab {

namespace fs = std::filesystem;
using nlohmann::json;

PromptLibrary::PromptLibrary(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) fail(ErrorCode::PromptTemplateError, "prompt directory '" + dir_.string() + "' not found");
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::istringstream in(read_text_file(entry.path()));
    Template t;
    std::string line;
    bool in_header = true;
    while (std::getline(in, line)) {
      if (in_header && line.rfind("##", 0) == 0) {
        const auto pos = line.find("version:");
        if (pos != std::string::npos) {
          t.version = line.substr(pos + 8);
          t.version.erase(0, t.version.find_first_not_of(' '));
        }
        continue;
      }
      in_header = false;
      t.body += line;
      t.body += '\n';
    }
    while (!t.body.empty() && (t.body.back() == '\n' || t.body.back() == ' ')) t.body.pop_back();
    templates_.emplace(entry.path().stem().string(), std::move(t));
  }
  const auto schema_dir = dir_ / "schemas";
  if (fs::is_directory(schema_dir)) {
    for (const auto& entry : fs::directory_iterator(schema_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") {
        schemas_.emplace(entry.path().stem().string(), read_text_file(entry.path()));
      }
    }
  }
}

fs::path PromptLibrary::default_dir() {
  if (const char* env = std::getenv("GEOVOCAB_PROMPT_DIR"); env != nullptr && *env != '\0') return env;
  return GEOVOCAB_DEFAULT_PROMPT_DIR;
}

const PromptLibrary::Template& PromptLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    fail(ErrorCode::PromptTemplateError, "template '" + name + ".txt' not found in '" + dir_.string() + "'");
  }
  return it->second;
}

std::string PromptLibrary::render(const std::string& name, const std::map<std::string, std::string>& vars) const {
  try {
    return render_template(get(name).body, vars);
  } catch (const Error& e) {
    throw Error(e.code(), name + ".txt: " + e.detail());
  }
}

std::string PromptLibrary::version(const std::string& name) const { return get(name).version; }

std::string PromptLibrary::schema(const std::string& schema_id) const {
  auto it = schemas_.find(schema_id);
  if (it == schemas_.end()) fail(ErrorCode::PromptTemplateError, "no schema file for '" + schema_id + "'");
  return it->second;
}

std::string render_template(const std::string& body, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(body.size());
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find("{{", pos);
    if (open == std::string::npos) {
      out.append(body, pos);
      break;
    }
    const auto close = body.find("}}", open + 2);
    if (close == std::string::npos) fail(ErrorCode::PromptTemplateError, "unterminated placeholder");
    out.append(body, pos, open - pos);
    const auto key = body.substr(open + 2, close - open - 2);
    auto it = vars.find(key);
    if (it == vars.end()) fail(ErrorCode::PromptTemplateError, "placeholder '{{" + key + "}}' has no value");
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::string request_text(const ChatRequest& request) {
  std::string text;
  for (const auto& part : request.user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      if (!text.empty()) text += "\n";
      text += t->text;
    }
  }
  return text;
}

StageSettings StageSettings::from_dir(const fs::path& prompt_dir) {
  StageSettings settings;
  settings.prompts = std::make_shared<const PromptLibrary>(prompt_dir);
  return settings;
}

ChatRequest StageSettings::make_request(std::string schema_id) const {
  ChatRequest request;
  request.system_prompt = prompts->render("system", {});
  request.temperature = temperature;
  request.max_tokens = max_tokens;
  request.response_schema_id = std::move(schema_id);
  return request;
}

StructuredReply request_structured(Gateway& gateway, const StageSettings& settings, ChatRequest request,
                                   const ReplyCheck& check, ErrorCode malformed) {
  const auto& prompts = *settings.prompts;
  StructuredReply reply;
  reply.prompt = request_text(request);
  std::string problem;
  ErrorCode code = malformed;
  for (int round = 0; round < 2; ++round) {
    if (round == 1) {
      request.repair_round = 1;
      request.repair_note = prompts.render(
          "repair", {{"problem", problem}, {"schema", prompts.schema(request.response_schema_id)}});
    }
    const auto response = gateway.complete(request);
    reply.raw_text = response.text;
    reply.backend = response.backend;
    reply.rounds = round + 1;
    try {
      reply.value = extract_json(response.text);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoJsonFound && e.code() != ErrorCode::UnbalancedJson) throw;
      problem = e.what();
      code = malformed;
      continue;
    }
    if (auto issue = check(reply.value)) {
      problem = issue->message;
      code = issue->code.value_or(malformed);
      continue;
    }
    return reply;
  }
  fail(code, request.response_schema_id + " reply unusable after one repair round: " + problem);
}

}  // namespace geovocab
