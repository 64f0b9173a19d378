#include "geovocab/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <system_error>

#include <spdlog/spdlog.h>

#include "geovocab/digest.hpp"
#include "geovocab/error.hpp"
#include "geovocab/file_util.hpp"

namespace geovocab {

namespace fs = std::filesystem;
using nlohmann::json;

GatewayConfig GatewayConfig::from_env() {
  GatewayConfig config;
  if (const char* url = std::getenv("GEOVOCAB_API_URL")) config.endpoint_url = url;
  if (const char* model = std::getenv("GEOVOCAB_MODEL")) config.model_name = model;
  return config;
}

void GatewayConfig::validate() const {
  if (max_retries < 0) fail(ErrorCode::ConfigError, "max_retries must be >= 0");
  if (max_concurrent_requests < 1) fail(ErrorCode::ConfigError, "max_concurrent_requests must be >= 1");
  if (backoff_base_ms < 0) fail(ErrorCode::ConfigError, "backoff_base_ms must be >= 0");
  if (timeout_ms < 1) fail(ErrorCode::ConfigError, "timeout_ms must be >= 1");
}

std::string fixture_key(const ChatRequest& request) {
  for (const auto& part : request.user_parts) {
    if (const auto* image = std::get_if<ImagePart>(&part)) {
      return request.response_schema_id + "__" + image->image.content_hash;
    }
  }
  std::string text;
  for (const auto& part : request.user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) text += t->text;
  }
  return request.response_schema_id + "__" + sha256_hex(text).substr(0, 12);
}

json chat_completions_body(const ChatRequest& request, const std::string& model) {
  json content = json::array();
  for (const auto& part : request.user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      content.push_back({{"type", "text"}, {"text", t->text}});
    } else {
      const auto& image = std::get<ImagePart>(part).image;
      const auto url = "data:" + image.mime + ";base64," + base64_encode(image.bytes);
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
  }
  if (!request.repair_note.empty()) content.push_back({{"type", "text"}, {"text", request.repair_note}});

  json messages = json::array();
  if (!request.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  messages.push_back({{"role", "user"}, {"content", std::move(content)}});
  return json{{"model", model},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens},
              {"messages", std::move(messages)}};
}

MockBackend::MockBackend(fs::path fixture_dir) : fixture_dir_(std::move(fixture_dir)) {
  if (!fs::is_directory(fixture_dir_)) {
    fail(ErrorCode::ConfigError, "mock fixture directory '" + fixture_dir_.string() + "' does not exist");
  }
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  const auto key = fixture_key(request);
  std::vector<fs::path> candidates;
  if (request.repair_round > 0) candidates.push_back(fixture_dir_ / (key + ".repair.json"));
  candidates.push_back(fixture_dir_ / (key + ".json"));

  for (const auto& path : candidates) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) continue;
    ChatResponse response;
    response.text = read_text_file(path);
    response.backend = Backend::Mock;
    response.attempt = 1;
    response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                              .count();
    if (response.text.empty()) fail(ErrorCode::EmptyCompletion, "fixture '" + path.string() + "' is empty");
    return response;
  }
  fail(ErrorCode::FixtureMissing, key);
}

ConcurrencyLimiter::ConcurrencyLimiter(int limit) : available_(limit) {}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    ++available_;
  }
  cv_.notify_one();
}

Gateway::Gateway(std::unique_ptr<ChatBackend> backend) : backend_(std::move(backend)) {}

Gateway Gateway::from_config(const GatewayConfig& config) {
  config.validate();
  if (config.mock_fixture_dir) return Gateway(std::make_unique<MockBackend>(*config.mock_fixture_dir));
  return Gateway(std::make_unique<HttpBackend>(config));
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  if (request.user_parts.empty()) fail(ErrorCode::PreconditionFailed, "chat request needs at least one user part");
  {
    std::lock_guard lock(stats_mutex_);
    ++calls_[request.response_schema_id];
  }
  spdlog::debug("mllm call schema={} key={} repair_round={}", request.response_schema_id, fixture_key(request),
                request.repair_round);
  return backend_->complete(request);
}

std::map<std::string, int> Gateway::calls_by_schema() const {
  std::lock_guard lock(stats_mutex_);
  return calls_;
}

int Gateway::total_calls() const {
  std::lock_guard lock(stats_mutex_);
  int total = 0;
  for (const auto& [_, n] : calls_) total += n;
  return total;
}

}  // namespace geovocab
