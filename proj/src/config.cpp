#include "vqr/config.hpp"

#include <set>

#include "json.hpp"

#include "vqr/io.hpp"

namespace vqr {

namespace {

using json = nlohmann::json;

// Reads known keys from one object and rejects anything else, so typos in a
// config file surface as errors instead of silently using defaults.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::InvalidConfig, path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvalidConfig, path_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown key " + path_ + "." + key);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

void read_backend(const json* j, const std::string& path, BackendConfig& b) {
  if (j == nullptr) return;
  ObjectReader r(*j, path);
  r.get("base_url", b.endpoint.base_url);
  r.get("path", b.endpoint.path);
  r.get("model", b.endpoint.model);
  r.get("api_key_env", b.endpoint.api_key_env);
  r.get("timeout_s", b.endpoint.timeout_s);
  r.get("max_retries", b.endpoint.max_retries);
  r.get("backoff_initial_s", b.endpoint.backoff_initial_s);
  r.get("top_logprobs", b.endpoint.top_logprobs);
  r.get("image_url_template", b.endpoint.image_url_template);
  r.get("vqa_instruction", b.endpoint.vqa_instruction);
  r.get("fixtures", b.fixtures);
  r.get("strict", b.strict);
  r.finish();
}

}  // namespace

BackendMode parse_backend_mode(const std::string& s) {
  if (s == "live") return BackendMode::Live;
  if (s == "mock") return BackendMode::Mock;
  throw Error(ErrorCode::InvalidConfig, "backend must be 'live' or 'mock', got '" + s + "'");
}

AppConfig AppConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  AppConfig c;
  ObjectReader root(j, "$");

  if (const json* rj = root.child("rerank")) {
    ObjectReader r(*rj, "$.rerank");
    r.get("lambda_vqa", c.rerank.lambda_vqa);
    r.get("k", c.rerank.k);
    r.get("n", c.rerank.n);
    r.get("fan_out", c.rerank.fan_out);
    std::string normalization = "min_max";
    r.get("normalization", normalization);
    if (normalization != "min_max") throw Error(ErrorCode::InvalidConfig, "$.rerank.normalization must be 'min_max'");
    std::vector<std::string> tokens{c.rerank.answer_tokens.yes, c.rerank.answer_tokens.no};
    r.get("answer_tokens", tokens);
    if (tokens.size() != 2) throw Error(ErrorCode::InvalidConfig, "$.rerank.answer_tokens must be [yes, no]");
    c.rerank.answer_tokens = {tokens[0], tokens[1]};
    r.finish();
  }

  std::string backend = "mock";
  root.get("backend", backend);
  c.backend = parse_backend_mode(backend);
  read_backend(root.child("text_backend"), "$.text_backend", c.text);
  read_backend(root.child("vqa_backend"), "$.vqa_backend", c.vqa);
  read_backend(root.child("annotator_backend"), "$.annotator_backend", c.annotator);
  root.get("retry_budget", c.retry_budget);
  root.get("attempt_cap", c.attempt_cap);
  root.get("seed", c.seed);
  root.get("cache_dir", c.cache_dir);
  root.get("prompt_template", c.prompt_template);

  if (const json* pj = root.child("paths")) {
    ObjectReader p(*pj, "$.paths");
    p.get("triplets", c.paths.triplets);
    p.get("questions", c.paths.questions);
    p.get("cir_scores", c.paths.cir_scores);
    p.get("image_index", c.paths.image_index);
    p.get("rankings", c.paths.rankings);
    p.get("traces", c.paths.traces);
    p.get("corpus", c.paths.corpus);
    p.get("report", c.paths.report);
    p.get("metrics", c.paths.metrics);
    p.finish();
  }
  if (const json* sj = root.child("serve")) {
    ObjectReader s(*sj, "$.serve");
    s.get("host", c.host);
    s.get("port", c.port);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

AppConfig AppConfig::load(const std::string& path) {
  try {
    return from_json_text(io::read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IngestionError) throw Error(ErrorCode::InvalidConfig, e.what());
    throw;
  }
}

void AppConfig::validate() const {
  rerank.validate();
  if (retry_budget < 0) throw Error(ErrorCode::InvalidConfig, "retry_budget must be >= 0");
  if (attempt_cap < 1) throw Error(ErrorCode::InvalidConfig, "attempt_cap must be >= 1");
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range");
  for (const BackendConfig* b : {&text, &vqa, &annotator}) {
    if (b->endpoint.top_logprobs < 5) throw Error(ErrorCode::InvalidConfig, "top_logprobs must be >= 5");
    if (!(b->endpoint.timeout_s > 0.0)) throw Error(ErrorCode::InvalidConfig, "timeout_s must be positive");
    if (b->endpoint.max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be >= 0");
  }
}

}  // namespace vqr
