#include "srm/annotator.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "srm/parser.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace srm {

namespace {

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

std::string default_template_id(TaskKind task) {
  switch (task) {
    case TaskKind::PairwisePreference: return "t1.pairwise";
    case TaskKind::QualityAssessment: return "t2.mos";
    case TaskKind::ScenarioPreference: return "t3.scenario";
    case TaskKind::DialoguePreference: return "t4.dialogue";
  }
  throw DomainError("unknown task");
}

void validate(const JudgeRequest& req) {
  std::string prefix = std::string(task_code(req.task)) + ".";
  if (req.template_id.size() <= prefix.size() ||
      req.template_id.compare(0, prefix.size(), prefix) != 0) {
    throw SchemaError("template '" + req.template_id + "' does not belong to task " +
                      std::string(task_code(req.task)));
  }
}

std::string canonical_json(const JudgeRequest& req) {
  // nlohmann::json keeps object keys sorted.
  nlohmann::json j;
  j["payload"] = req.payload;
  j["task"] = task_code(req.task);
  j["template_id"] = req.template_id;
  return j.dump();
}

std::string request_hash(const JudgeRequest& req) {
  return sha256_hex(canonical_json(req));
}

// --- replay ----------------------------------------------------------------

ReplayBackend::ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}

JudgeResponse ReplayBackend::annotate(const JudgeRequest& req) {
  validate(req);
  auto start = std::chrono::steady_clock::now();
  std::string hash = request_hash(req);
  std::ifstream in(dir_ / (hash + ".txt"), std::ios::binary);
  if (!in) throw FixtureMiss(hash);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty()) throw FixtureMiss(hash);
  return {std::move(text), std::chrono::steady_clock::now() - start,
          ResponseSource::Replay};
}

std::filesystem::path ReplayBackend::store(const JudgeRequest& req,
                                           const std::string& raw_text) const {
  validate(req);
  std::filesystem::create_directories(dir_);
  auto path = dir_ / (request_hash(req) + ".txt");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << raw_text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return path;
}

// --- remote ----------------------------------------------------------------

RemoteBackend::RemoteBackend(Transport transport, RetryPolicy policy, SleepFn sleep)
    : transport_(std::move(transport)), policy_(policy), sleep_(std::move(sleep)) {
  if (!transport_) throw ConfigError("remote backend needs a transport");
  if (policy_.max_attempts < 1) throw DomainError("max_attempts must be >= 1");
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::size_t RemoteBackend::cache_size() const {
  std::shared_lock lock(cache_mutex_);
  return cache_.size();
}

JudgeResponse RemoteBackend::annotate(const JudgeRequest& req) {
  validate(req);
  auto start = std::chrono::steady_clock::now();
  std::string hash = request_hash(req);
  {
    std::shared_lock lock(cache_mutex_);
    if (auto it = cache_.find(hash); it != cache_.end()) {
      return {it->second, std::chrono::steady_clock::now() - start, ResponseSource::Remote};
    }
  }

  nlohmann::json body;
  body["template_id"] = req.template_id;
  body["payload"] = req.payload;
  const std::string wire = body.dump();

  std::string last_error;
  auto backoff = policy_.initial_backoff;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    ++attempts_;
    try {
      std::string text = transport_(wire);
      auto parsed = parse_judgment(text, req.task);
      if (const auto* err = std::get_if<FormatError>(&parsed)) {
        last_error = "response does not parse: " + std::string(to_string(err->kind)) +
                     " (" + err->detail + ")";
      } else {
        std::unique_lock lock(cache_mutex_);
        auto [it, inserted] = cache_.emplace(hash, std::move(text));
        return {it->second, std::chrono::steady_clock::now() - start,
                ResponseSource::Remote};
      }
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt < policy_.max_attempts) {
      sleep_(backoff);
      auto next = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * policy_.multiplier));
      backoff = std::min(next, policy_.max_backoff);
    }
  }
  throw TransportError("request " + hash + " failed after " +
                       std::to_string(policy_.max_attempts) + " attempts: " + last_error);
}

Transport http_transport_from_env() {
  std::string endpoint = env_or("SRM_JUDGE_ENDPOINT", "");
  if (endpoint.empty()) throw ConfigError("SRM_JUDGE_ENDPOINT is not set");
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("SRM_JUDGE_ENDPOINT must look like http://host[:port]/path");
  }
  auto path_start = endpoint.find('/', scheme_end + 3);
  std::string base = endpoint.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
  std::string token = env_or("SRM_JUDGE_TOKEN", "");
  int timeout_s = std::atoi(env_or("SRM_JUDGE_TIMEOUT_S", "60").c_str());
  if (timeout_s <= 0) throw ConfigError("SRM_JUDGE_TIMEOUT_S must be positive");

  return [base, path, token, timeout_s](const std::string& body) -> std::string {
    httplib::Client client(base);
    client.set_connection_timeout(timeout_s, 0);
    client.set_read_timeout(timeout_s, 0);
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) throw TransportError("HTTP error: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw TransportError("HTTP status " + std::to_string(res->status));
    }
    if (res->body.empty()) throw TransportError("empty response body");
    return res->body;
  };
}

std::vector<BatchItem> batch_annotate(const std::vector<JudgeRequest>& reqs,
                                      JudgeBackend& backend, int parallelism) {
  if (parallelism < 1) throw DomainError("parallelism must be >= 1");
  std::vector<BatchItem> out(reqs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reqs.size(); i = next++) {
      try {
        out[i].response = backend.annotate(reqs[i]);
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), reqs.size());
  if (n <= 1) {
    worker();
    return out;
  }
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace srm
