#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "geovocab/reasoning_types.hpp"

namespace geovocab {

struct TextPart {
  std::string text;
};

struct ImagePart {
  ImageRef image;
};

using ChatPart = std::variant<TextPart, ImagePart>;

struct ChatRequest {
  std::string system_prompt;
  std::vector<ChatPart> user_parts;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string response_schema_id;
  /// Set on the single repair round that follows an unusable reply. Sent as a
  /// trailing text part but excluded from the fixture key.
  std::string repair_note;
  int repair_round = 0;
};

enum class Backend { Http, Mock };

struct ChatResponse {
  std::string text;
  Backend backend = Backend::Mock;
  std::int64_t latency_ms = 0;
  int attempt = 1;
};

struct GatewayConfig {
  std::string endpoint_url;
  std::string api_key_env_name = "GEOVOCAB_API_KEY";
  std::string model_name;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_concurrent_requests = 4;
  int timeout_ms = 60000;
  std::optional<std::filesystem::path> mock_fixture_dir;

  /// Fills endpoint and model from GEOVOCAB_API_URL / GEOVOCAB_MODEL when unset.
  static GatewayConfig from_env();
  /// Throws ConfigError on invalid limits.
  void validate() const;
};

/// Deterministic mock key: schema id + "__" + the first image's content hash,
/// or the first 12 hex chars of SHA-256 over the concatenated text parts.
std::string fixture_key(const ChatRequest& request);

/// OpenAI-compatible chat-completions body for the request.
nlohmann::json chat_completions_body(const ChatRequest& request, const std::string& model);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Serves `{key}.json` files from a fixture directory. Repair rounds first try
/// `{key}.repair.json`, then fall back to `{key}.json`.
class MockBackend final : public ChatBackend {
 public:
  explicit MockBackend(std::filesystem::path fixture_dir);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::filesystem::path fixture_dir_;
};

/// Bounds the number of callers inside a critical region.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit);
  void acquire();
  void release();

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

/// POSTs to {endpoint}/chat/completions with bearer auth. Retries 429, 5xx and
/// transport failures (including timeouts) with jittered exponential backoff,
/// at most max_retries + 1 attempts in total. Other 4xx fail immediately.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(GatewayConfig config);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::chrono::milliseconds backoff_delay(int attempt);

  GatewayConfig config_;
  std::string api_key_;
  ConcurrencyLimiter limiter_;
  std::mutex rng_mutex_;
  std::uint64_t rng_state_;
};

/// Thread-safe front door used by every pipeline stage. Counts calls per
/// schema id so callers can audit which stages reached the model.
class Gateway {
 public:
  explicit Gateway(std::unique_ptr<ChatBackend> backend);

  /// Mock backend when mock_fixture_dir is set, HTTP otherwise.
  static Gateway from_config(const GatewayConfig& config);

  ChatResponse complete(const ChatRequest& request);

  std::map<std::string, int> calls_by_schema() const;
  int total_calls() const;

 private:
  std::unique_ptr<ChatBackend> backend_;
  mutable std::mutex stats_mutex_;
  std::map<std::string, int> calls_;
};

}  // namespace geovocab
