#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "vqr/domain.hpp"
#include "vqr/error.hpp"
#include "vqr/scoring.hpp"

namespace vqr {

struct TextGenRequest {
  std::string prompt;
  int max_tokens = 512;
  double temperature = 0.0;
};

struct VqaRequest {
  std::string question_text;
  // One id (candidate) or two ids ordered (reference, candidate).
  std::vector<std::string> image_refs;
  AnswerTokens answer_tokens;
};

/// Builds the request for one question about one candidate image.
VqaRequest make_vqa_request(const VisualQuestion& question, const std::string& reference_id,
                            const std::string& candidate_id, const AnswerTokens& tokens);

void validate(const TextGenRequest& request);  // throws InvalidArgument
void validate(const VqaRequest& request);      // throws InvalidArgument

// Canonical request JSON and its SHA-256; shared by fixtures and the cache.
nlohmann::json canonical_json(const TextGenRequest& request);
nlohmann::json canonical_json(const VqaRequest& request);
std::string request_key(const TextGenRequest& request);
std::string request_key(const VqaRequest& request);

class TextClient {
 public:
  virtual ~TextClient() = default;
  virtual std::string complete(const TextGenRequest& request) = 0;
};

class VqaClient {
 public:
  virtual ~VqaClient() = default;
  /// Must contain at least one of the request's answer tokens.
  virtual TokenLogprobs answer_logprobs(const VqaRequest& request) = 0;
};

// Throws MissingBothAnswerTokens when neither answer token is in `logprobs`.
void require_answer_token(const TokenLogprobs& logprobs, const AnswerTokens& tokens);

template <typename T>
struct Outcome {
  std::optional<T> value;
  std::optional<Error> error;

  bool ok() const noexcept { return value.has_value(); }
};

/// Applies `fn` to every input with at most `limit` calls in flight.
/// Results keep input order; a failing call yields an error in its slot
/// without affecting the others.
template <typename In, typename Fn>
auto bounded_map(std::span<const In> inputs, std::size_t limit, Fn&& fn)
    -> std::vector<Outcome<std::invoke_result_t<Fn&, const In&>>> {
  using R = std::invoke_result_t<Fn&, const In&>;
  if (limit == 0) throw Error(ErrorCode::InvalidArgument, "fan-out limit must be >= 1");
  std::vector<Outcome<R>> results(inputs.size());

  auto run_one = [&](std::size_t i) {
    try {
      results[i].value.emplace(fn(inputs[i]));
    } catch (const Error& e) {
      results[i].error.emplace(e);
    } catch (const std::exception& e) {
      results[i].error.emplace(ErrorCode::ProtocolError, e.what());
    }
  };

  const std::size_t workers = std::min(limit, inputs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < inputs.size(); i = next.fetch_add(1)) run_one(i);
      });
    }
  }
  return results;
}

std::vector<Outcome<TokenLogprobs>> bounded_map(std::span<const VqaRequest> requests, std::size_t limit,
                                                VqaClient& client);

/// Append-only, content-hash keyed record file. One JSON object per line:
/// {"key": ..., "request": ..., "response": ...}. Safe for concurrent use.
class RecordStore {
 public:
  RecordStore() = default;  // in-memory only
  explicit RecordStore(std::string path);  // loads existing records, appends new ones

  std::optional<nlohmann::json> find(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& request, const nlohmann::json& response);
  std::size_t size() const;
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, nlohmann::json> records_;
};

inline constexpr std::string_view kRecordHeader = "# vqr-records v1";

/// Replays completions keyed by request content hash.
class MockTextClient : public TextClient {
 public:
  explicit MockTextClient(std::shared_ptr<RecordStore> store = std::make_shared<RecordStore>(), bool strict = true);

  void add_fixture(const TextGenRequest& request, const std::string& output);
  std::string complete(const TextGenRequest& request) override;

 private:
  std::shared_ptr<RecordStore> store_;
  bool strict_;
};

/// Replays answer log-probabilities keyed by request content hash. When not
/// strict, unknown requests get a deterministic synthetic Yes/No split derived
/// from the hash.
class MockVqaClient : public VqaClient {
 public:
  explicit MockVqaClient(std::shared_ptr<RecordStore> store = std::make_shared<RecordStore>(), bool strict = true);

  void add_fixture(const VqaRequest& request, const TokenLogprobs& logprobs);
  TokenLogprobs answer_logprobs(const VqaRequest& request) override;

 private:
  std::shared_ptr<RecordStore> store_;
  bool strict_;
};

TokenLogprobs synthetic_logprobs(const VqaRequest& request);

nlohmann::json logprobs_to_json(const TokenLogprobs& logprobs);
TokenLogprobs logprobs_from_json(const nlohmann::json& j);

/// Serves from the store when possible; otherwise calls the backend and
/// records the response. Failures are not cached.
class CachingTextClient : public TextClient {
 public:
  CachingTextClient(TextClient& backend, std::shared_ptr<RecordStore> store);
  std::string complete(const TextGenRequest& request) override;
  std::size_t backend_calls() const noexcept { return backend_calls_.load(); }

 private:
  TextClient& backend_;
  std::shared_ptr<RecordStore> store_;
  std::atomic<std::size_t> backend_calls_{0};
};

class CachingVqaClient : public VqaClient {
 public:
  CachingVqaClient(VqaClient& backend, std::shared_ptr<RecordStore> store);
  TokenLogprobs answer_logprobs(const VqaRequest& request) override;
  std::size_t backend_calls() const noexcept { return backend_calls_.load(); }

 private:
  VqaClient& backend_;
  std::shared_ptr<RecordStore> store_;
  std::atomic<std::size_t> backend_calls_{0};
};

/// Caps in-flight requests across every caller sharing this handle.
class LimitedVqaClient : public VqaClient {
 public:
  LimitedVqaClient(VqaClient& backend, std::ptrdiff_t limit) : backend_(backend), slots_(limit) {}
  TokenLogprobs answer_logprobs(const VqaRequest& request) override;

 private:
  VqaClient& backend_;
  std::counting_semaphore<> slots_;
};

}  // namespace vqr
