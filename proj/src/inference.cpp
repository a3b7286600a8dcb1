#include "vqr/inference.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>

#include "vqr/hash.hpp"

namespace vqr {

VqaRequest make_vqa_request(const VisualQuestion& question, const std::string& reference_id,
                            const std::string& candidate_id, const AnswerTokens& tokens) {
  VqaRequest request;
  request.question_text = question.text();
  if (question.needs_reference()) request.image_refs.push_back(reference_id);
  request.image_refs.push_back(candidate_id);
  request.answer_tokens = tokens;
  return request;
}

void validate(const TextGenRequest& request) {
  if (request.max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
  if (!std::isfinite(request.temperature) || request.temperature < 0.0)
    throw Error(ErrorCode::InvalidArgument, "temperature must be a non-negative real");
}

void validate(const VqaRequest& request) {
  if (request.image_refs.empty() || request.image_refs.size() > 2)
    throw Error(ErrorCode::InvalidArgument, "a VQA request takes 1 or 2 images, got " +
                                                std::to_string(request.image_refs.size()));
  for (const auto& ref : request.image_refs) {
    if (ref.empty()) throw Error(ErrorCode::InvalidArgument, "empty image reference");
  }
  if (request.question_text.empty()) throw Error(ErrorCode::InvalidArgument, "empty question");
}

nlohmann::json canonical_json(const TextGenRequest& request) {
  return nlohmann::json{{"kind", "text"},
                        {"prompt", request.prompt},
                        {"max_tokens", request.max_tokens},
                        {"temperature", request.temperature}};
}

nlohmann::json canonical_json(const VqaRequest& request) {
  return nlohmann::json{{"kind", "vqa"},
                        {"question", request.question_text},
                        {"images", request.image_refs},
                        {"answer_tokens", {request.answer_tokens.yes, request.answer_tokens.no}}};
}

std::string request_key(const TextGenRequest& request) { return sha256_hex(canonical_json(request).dump()); }
std::string request_key(const VqaRequest& request) { return sha256_hex(canonical_json(request).dump()); }

void require_answer_token(const TokenLogprobs& logprobs, const AnswerTokens& tokens) {
  if (!logprobs.contains(tokens.yes) && !logprobs.contains(tokens.no))
    throw Error(ErrorCode::MissingBothAnswerTokens,
                "neither '" + tokens.yes + "' nor '" + tokens.no + "' among returned tokens");
}

std::vector<Outcome<TokenLogprobs>> bounded_map(std::span<const VqaRequest> requests, std::size_t limit,
                                                VqaClient& client) {
  return bounded_map(requests, limit, [&client](const VqaRequest& r) { return client.answer_logprobs(r); });
}

// ---------------------------------------------------------------------------
// RecordStore

RecordStore::RecordStore(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.front() == '#') {
      if (line != kRecordHeader)
        throw Error(ErrorCode::IngestionError, path_ + ":1: unsupported record header '" + line + "'");
      continue;
    }
    try {
      auto j = nlohmann::json::parse(line);
      records_.try_emplace(j.at("key").get<std::string>(), j.at("response"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IngestionError, path_ + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::optional<nlohmann::json> RecordStore::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void RecordStore::put(const std::string& key, const nlohmann::json& request, const nlohmann::json& response) {
  std::lock_guard lock(mutex_);
  if (!records_.try_emplace(key, response).second) return;
  if (path_.empty()) return;

  nlohmann::ordered_json record;
  record["key"] = key;
  record["request"] = request;
  record["response"] = response;
  std::string line = record.dump() + "\n";

  std::FILE* f = std::fopen(path_.c_str(), "ab");
  if (f == nullptr) throw Error(ErrorCode::IngestionError, "cannot open record file " + path_);
  std::fseek(f, 0, SEEK_END);
  if (std::ftell(f) == 0) line = std::string(kRecordHeader) + "\n" + line;
  // One fwrite per record so concurrent appenders never interleave within a line.
  const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size();
  std::fclose(f);
  if (!ok) throw Error(ErrorCode::IngestionError, "short write to record file " + path_);
}

std::size_t RecordStore::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

// ---------------------------------------------------------------------------
// Mocks

nlohmann::json logprobs_to_json(const TokenLogprobs& logprobs) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [token, lp] : logprobs) j[token] = lp;
  return j;
}

TokenLogprobs logprobs_from_json(const nlohmann::json& j) {
  TokenLogprobs out;
  for (const auto& [token, lp] : j.items()) {
    const double v = lp.get<double>();
    if (!std::isfinite(v)) throw Error(ErrorCode::ProtocolError, "non-finite log-probability for '" + token + "'");
    out.emplace(token, v);
  }
  return out;
}

MockTextClient::MockTextClient(std::shared_ptr<RecordStore> store, bool strict)
    : store_(std::move(store)), strict_(strict) {}

void MockTextClient::add_fixture(const TextGenRequest& request, const std::string& output) {
  store_->put(request_key(request), canonical_json(request), nlohmann::json{{"text", output}});
}

std::string MockTextClient::complete(const TextGenRequest& request) {
  validate(request);
  const auto key = request_key(request);
  if (auto hit = store_->find(key)) return hit->at("text").get<std::string>();
  if (strict_) throw Error(ErrorCode::ProtocolError, "no fixture for request " + key);
  return {};
}

MockVqaClient::MockVqaClient(std::shared_ptr<RecordStore> store, bool strict)
    : store_(std::move(store)), strict_(strict) {}

void MockVqaClient::add_fixture(const VqaRequest& request, const TokenLogprobs& logprobs) {
  store_->put(request_key(request), canonical_json(request), nlohmann::json{{"logprobs", logprobs_to_json(logprobs)}});
}

TokenLogprobs MockVqaClient::answer_logprobs(const VqaRequest& request) {
  validate(request);
  const auto key = request_key(request);
  TokenLogprobs out;
  if (auto hit = store_->find(key)) {
    out = logprobs_from_json(hit->at("logprobs"));
  } else if (strict_) {
    throw Error(ErrorCode::ProtocolError, "no fixture for request " + key);
  } else {
    out = synthetic_logprobs(request);
  }
  require_answer_token(out, request.answer_tokens);
  return out;
}

TokenLogprobs synthetic_logprobs(const VqaRequest& request) {
  const auto key = request_key(request);
  const std::uint64_t bits = std::stoull(key.substr(0, 16), nullptr, 16);
  // 53 high bits -> uniform in [0,1); keep p away from 0 and 1.
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  const double p_yes = 0.02 + 0.96 * u;
  return {{request.answer_tokens.yes, std::log(p_yes)}, {request.answer_tokens.no, std::log1p(-p_yes)}};
}

// ---------------------------------------------------------------------------
// Decorators

CachingTextClient::CachingTextClient(TextClient& backend, std::shared_ptr<RecordStore> store)
    : backend_(backend), store_(std::move(store)) {}

std::string CachingTextClient::complete(const TextGenRequest& request) {
  const auto key = request_key(request);
  if (auto hit = store_->find(key)) return hit->at("text").get<std::string>();
  ++backend_calls_;
  auto text = backend_.complete(request);
  store_->put(key, canonical_json(request), nlohmann::json{{"text", text}});
  return text;
}

CachingVqaClient::CachingVqaClient(VqaClient& backend, std::shared_ptr<RecordStore> store)
    : backend_(backend), store_(std::move(store)) {}

TokenLogprobs CachingVqaClient::answer_logprobs(const VqaRequest& request) {
  const auto key = request_key(request);
  if (auto hit = store_->find(key)) return logprobs_from_json(hit->at("logprobs"));
  ++backend_calls_;
  auto logprobs = backend_.answer_logprobs(request);
  store_->put(key, canonical_json(request), nlohmann::json{{"logprobs", logprobs_to_json(logprobs)}});
  return logprobs;
}

TokenLogprobs LimitedVqaClient::answer_logprobs(const VqaRequest& request) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};
  return backend_.answer_logprobs(request);
}

}  // namespace vqr
