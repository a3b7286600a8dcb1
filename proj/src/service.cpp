#include "vqr/service.hpp"

#include <cmath>

#include "httplib.h"
#include "json.hpp"

#include "vqr/io.hpp"
#include "vqr/log.hpp"
#include "vqr/questions.hpp"
#include "vqr/rerank.hpp"

namespace vqr {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

struct SchemaError {
  std::string path;
  std::string message;
};

const json& field(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError{path + "." + key, "required field is missing"};
  return *it;
}

std::string string_field(const json& obj, const std::string& path, const char* key) {
  const auto& v = field(obj, path, key);
  if (!v.is_string()) throw SchemaError{path + "." + key, "must be a string"};
  return v.get<std::string>();
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw SchemaError{path, "must be an object"};
}

RawQueryRecord parse_query(const json& j) {
  const std::string path = "$.query";
  require_object(j, path);
  RawQueryRecord raw;
  raw.query_id = string_field(j, path, "query_id");
  raw.reference_image_id = string_field(j, path, "reference_image_id");
  if (j.contains("text")) raw.text = string_field(j, path, "text");
  if (j.contains("captions")) {
    const auto& c = j.at("captions");
    if (!c.is_array()) throw SchemaError{path + ".captions", "must be an array of strings"};
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!c[i].is_string()) throw SchemaError{path + ".captions[" + std::to_string(i) + "]", "must be a string"};
      raw.captions.push_back(c[i].get<std::string>());
    }
  }
  if (!raw.text && raw.captions.empty()) throw SchemaError{path + ".text", "one of text or captions is required"};
  raw.category = j.contains("category") ? string_field(j, path, "category") : "other";
  return raw;
}

std::vector<CandidateInput> parse_candidates(const json& j) {
  if (!j.is_array() || j.empty()) throw SchemaError{"$.candidates", "must be a non-empty array"};
  std::vector<CandidateInput> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "$.candidates[" + std::to_string(i) + "]";
    require_object(j[i], path);
    CandidateInput c;
    c.candidate_image_id = string_field(j[i], path, "candidate_id");
    const auto& s = field(j[i], path, "score");
    if (!s.is_number() || !std::isfinite(s.get<double>())) throw SchemaError{path + ".score", "must be a finite number"};
    c.cir_score_raw = s.get<double>();
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<VisualQuestion> parse_questions(const json& j) {
  if (!j.is_array()) throw SchemaError{"$.questions", "must be an array"};
  std::vector<VisualQuestion> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "$.questions[" + std::to_string(i) + "]";
    require_object(j[i], path);
    const auto text = string_field(j[i], path, "question");
    const auto expected = string_field(j[i], path, "expected");
    const auto& nr = field(j[i], path, "needs_reference");
    if (!nr.is_boolean()) throw SchemaError{path + ".needs_reference", "must be a boolean"};
    const auto answer = parse_answer(expected);
    if (!answer) throw SchemaError{path + ".expected", "must be Yes or No"};
    try {
      out.emplace_back(text, *answer, nr.get<bool>());
    } catch (const Error& e) {
      throw SchemaError{path, e.what()};
    }
  }
  return out;
}

ServiceResponse error_response(int status, std::string_view error, const std::string& message,
                               const std::string& path = {}) {
  ojson body;
  body["error"] = error;
  body["message"] = message;
  if (!path.empty()) body["path"] = path;
  return {status, body.dump()};
}

}  // namespace

RerankService::RerankService(RerankConfig config, TextClient& text, VqaClient& vqa, int retry_budget)
    : config_(std::move(config)), text_(text), vqa_(vqa, config_.fan_out), retry_budget_(retry_budget) {
  config_.validate();
}

RerankService::~RerankService() = default;

ServiceResponse RerankService::handle(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(400, "SchemaError", std::string("body is not valid JSON: ") + e.what(), "$");
  }
  try {
    require_object(j, "$");
    const auto raw = parse_query(field(j, "$", "query"));
    auto candidates = parse_candidates(field(j, "$", "candidates"));
    std::vector<VisualQuestion> questions;
    if (j.contains("questions")) questions = parse_questions(j.at("questions"));

    QueryValidator validator;
    const auto query = validator.validate(raw);
    if (questions.empty()) {
      GenerationOptions options;
      options.retry_budget = retry_budget_;
      questions = generate_questions(query, text_, options);
    }
    auto result = rerank(query, candidates, questions, config_, vqa_);

    ojson out;
    out["query_id"] = query.query_id;
    out["ranking"] = ojson::array();
    for (const auto& s : result.ranking) out["ranking"].push_back(io::score_to_json(s));
    out["trace"] = ojson::array();
    for (const auto& t : result.trace) out["trace"].push_back(io::trace_record(query.query_id, t));
    out["requests"] = result.requests_issued;
    return {200, out.dump()};
  } catch (const SchemaError& e) {
    return error_response(400, "SchemaError", e.message, e.path);
  } catch (const Error& e) {
    if (is_backend_error(e.code())) return error_response(502, error_name(e.code()), e.message());
    return error_response(400, error_name(e.code()), e.message());
  } catch (const std::exception& e) {
    return error_response(500, "InternalError", e.what());
  }
}

int RerankService::bind(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  server_->Post("/rerank", [this](const httplib::Request& req, httplib::Response& res) {
    auto r = handle(req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"status\":\"ok\"}", "application/json");
  });
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::InvalidConfig, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void RerankService::listen() {
  if (!server_) throw Error(ErrorCode::InvalidArgument, "bind() before listen()");
  log_info("serving POST /rerank");
  server_->listen_after_bind();
}

void RerankService::stop() {
  if (server_) server_->stop();
}

}  // namespace vqr
