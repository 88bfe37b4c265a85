#pragma once

// External judge client. Requests are content-addressed by a SHA-256 of
// their canonical JSON; the replay backend serves stored responses from
// `<hash>.txt` files and the remote backend calls a live endpoint through
// an injectable transport.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "srm/schema.hpp"

namespace srm {

struct JudgeRequest {
  TaskKind task = TaskKind::PairwisePreference;
  std::map<std::string, std::string> payload;
  std::string template_id;
};

/// Prompt template id for a task ("t1.pairwise", "t2.mos", ...).
std::string default_template_id(TaskKind task);

/// Throws SchemaError unless template_id belongs to the request's task.
void validate(const JudgeRequest& req);

/// Canonical serialization: keys sorted, no whitespace.
std::string canonical_json(const JudgeRequest& req);

/// Lowercase hex SHA-256 of canonical_json(req).
std::string request_hash(const JudgeRequest& req);

enum class ResponseSource { Replay, Remote };

struct JudgeResponse {
  std::string raw_text;
  std::chrono::nanoseconds latency{0};
  ResponseSource source = ResponseSource::Replay;
};

class FixtureMiss : public std::runtime_error {
 public:
  explicit FixtureMiss(std::string hash)
      : std::runtime_error("no replay fixture for request " + hash),
        hash_(std::move(hash)) {}
  const std::string& hash() const { return hash_; }

 private:
  std::string hash_;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  /// Must be safe to call concurrently.
  virtual JudgeResponse annotate(const JudgeRequest& req) = 0;
};

class ReplayBackend : public JudgeBackend {
 public:
  explicit ReplayBackend(std::filesystem::path dir);

  /// Stored text verbatim. Throws FixtureMiss naming the hash.
  JudgeResponse annotate(const JudgeRequest& req) override;

  /// Writes `raw_text` as the fixture for `req`; returns its path.
  std::filesystem::path store(const JudgeRequest& req, const std::string& raw_text) const;

 private:
  std::filesystem::path dir_;
};

/// Sends one serialized request body, returns the response body. Throws
/// TransportError on failure.
using Transport = std::function<std::string(const std::string& body)>;
using SleepFn = std::function<void(std::chrono::milliseconds)>;

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

class RemoteBackend : public JudgeBackend {
 public:
  /// `sleep` defaults to std::this_thread::sleep_for.
  RemoteBackend(Transport transport, RetryPolicy policy = {}, SleepFn sleep = {});

  /// Cached responses are returned without a call. Otherwise retries
  /// transport failures and responses that do not parse for the request's
  /// task, backing off exponentially; throws TransportError when attempts
  /// run out.
  JudgeResponse annotate(const JudgeRequest& req) override;

  /// Transport calls made so far.
  int attempts() const { return attempts_.load(); }
  std::size_t cache_size() const;

 private:
  Transport transport_;
  RetryPolicy policy_;
  SleepFn sleep_;
  std::atomic<int> attempts_{0};
  mutable std::shared_mutex cache_mutex_;
  std::unordered_map<std::string, std::string> cache_;
};

/// HTTP POST transport configured from the environment:
/// SRM_JUDGE_ENDPOINT (required, e.g. http://host:8080/judge),
/// SRM_JUDGE_TOKEN (optional bearer token), SRM_JUDGE_TIMEOUT_S (default 60).
/// Throws ConfigError when the endpoint is missing or malformed.
Transport http_transport_from_env();

struct BatchItem {
  std::optional<JudgeResponse> response;
  std::optional<std::string> error;
  bool ok() const { return response.has_value(); }
};

/// Runs every request with up to `parallelism` in flight. Results keep input
/// order; a failed item records its error and never aborts the batch.
/// Throws DomainError for parallelism < 1.
std::vector<BatchItem> batch_annotate(const std::vector<JudgeRequest>& reqs,
                                      JudgeBackend& backend, int parallelism);

}  // namespace srm
