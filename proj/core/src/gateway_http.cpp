#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "geovocab/error.hpp"
#include "geovocab/gateway.hpp"

namespace geovocab {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string base_path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::ConfigError, "endpoint '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  ep.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  return ep;
}

std::string first_choice_content(const std::string& body) {
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::TransportError, "response body is not JSON");
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    fail(ErrorCode::EmptyCompletion, "response has no choices");
  }
  const auto& message = doc["choices"][0].value("message", json::object());
  const auto content = message.value("content", json());
  std::string text;
  if (content.is_string()) {
    text = content.get<std::string>();
  } else if (content.is_array()) {
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
    }
  }
  if (text.empty()) fail(ErrorCode::EmptyCompletion, "first choice has empty content");
  return text;
}

}  // namespace

HttpBackend::HttpBackend(GatewayConfig config)
    : config_(std::move(config)),
      limiter_(config_.max_concurrent_requests),
      rng_state_(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())) {
  config_.validate();
  if (config_.endpoint_url.empty()) {
    fail(ErrorCode::ConfigError, "HTTP backend needs an endpoint (set GEOVOCAB_API_URL or --api-url)");
  }
  const char* key = std::getenv(config_.api_key_env_name.c_str());
  if (key == nullptr || *key == '\0') {
    fail(ErrorCode::ConfigError, "HTTP backend needs an API key in $" + config_.api_key_env_name);
  }
  api_key_ = key;
}

std::chrono::milliseconds HttpBackend::backoff_delay(int attempt) {
  double unit = 0.0;
  {
    std::lock_guard lock(rng_mutex_);
    // splitmix64
    std::uint64_t z = (rng_state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    unit = static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  const double base = static_cast<double>(config_.backoff_base_ms) * static_cast<double>(1ULL << (attempt - 1));
  return std::chrono::milliseconds(static_cast<std::int64_t>(base * (0.5 + 0.5 * unit)));
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  const auto endpoint = split_endpoint(config_.endpoint_url);
  const auto path = endpoint.base_path + "/chat/completions";
  const auto body = chat_completions_body(request, config_.model_name).dump();
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  const int max_attempts = config_.max_retries + 1;

  const auto start = std::chrono::steady_clock::now();
  ErrorCode last_code = ErrorCode::TransportError;
  std::string last_message;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(backoff_delay(attempt - 1));

    httplib::Result result;
    {
      limiter_.acquire();
      struct Release {
        ConcurrencyLimiter& l;
        ~Release() { l.release(); }
      } release{limiter_};
      httplib::Client client(endpoint.origin);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      client.set_bearer_token_auth(api_key_);
      result = client.Post(path, body, "application/json");
    }

    if (!result) {
      last_code = ErrorCode::TransportError;
      last_message = "attempt " + std::to_string(attempt) + ": " + httplib::to_string(result.error());
      spdlog::warn("chat completion transport failure ({}), attempt {}/{}", httplib::to_string(result.error()), attempt,
                   max_attempts);
      continue;
    }
    const int status = result->status;
    if (status == 401 || status == 403) {
      fail(ErrorCode::AuthError, "HTTP " + std::to_string(status) + " from " + config_.endpoint_url);
    }
    if (status == 429 || status >= 500) {
      last_code = status == 429 ? ErrorCode::RateLimited : ErrorCode::TransportError;
      last_message = "HTTP " + std::to_string(status) + " on attempt " + std::to_string(attempt);
      spdlog::warn("chat completion HTTP {}, attempt {}/{}", status, attempt, max_attempts);
      continue;
    }
    if (status != 200) {
      fail(ErrorCode::TransportError, "non-retryable HTTP " + std::to_string(status) + ": " + result->body);
    }
    ChatResponse response;
    response.text = first_choice_content(result->body);
    response.backend = Backend::Http;
    response.attempt = attempt;
    response.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    return response;
  }
  fail(last_code, "retry budget of " + std::to_string(max_attempts) + " attempts exhausted; last: " + last_message);
}

}  // namespace geovocab
