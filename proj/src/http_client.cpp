#include "vqr/http_client.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "vqr/hash.hpp"
#include "vqr/log.hpp"

namespace vqr {

namespace wire {

namespace {

using ojson = nlohmann::ordered_json;

template <typename T>
T field(const nlohmann::json& j, const char* name, T fallback) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

ChatCompletion parse_completion(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("response is not JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) throw Error(ErrorCode::ProtocolError, "response is not a JSON object");
    if (auto err = j.find("error"); err != j.end() && !err->is_null())
      throw Error(ErrorCode::ProtocolError, "backend error: " + err->dump());
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty())
      throw Error(ErrorCode::ProtocolError, "response has no choices");

    ChatCompletion c;
    c.id = field<std::string>(j, "id", "");
    c.object = field<std::string>(j, "object", "chat.completion");
    c.created = field<long>(j, "created", 0);
    c.model = field<std::string>(j, "model", "");
    for (const auto& cj : *choices) {
      Choice choice;
      choice.index = field<int>(cj, "index", 0);
      const auto& message = cj.at("message");
      choice.role = field<std::string>(message, "role", "assistant");
      choice.content = field<std::string>(message, "content", "");
      if (auto lp = cj.find("logprobs"); lp != cj.end() && !lp->is_null()) {
        std::vector<TokenLogprob> tokens;
        for (const auto& tj : lp->at("content")) {
          TokenLogprob t;
          t.token = tj.at("token").get<std::string>();
          t.logprob = tj.at("logprob").get<double>();
          if (auto top = tj.find("top_logprobs"); top != tj.end() && !top->is_null()) {
            for (const auto& xj : *top) t.top_logprobs.push_back({xj.at("token").get<std::string>(), xj.at("logprob").get<double>()});
          }
          tokens.push_back(std::move(t));
        }
        choice.logprobs = std::move(tokens);
      }
      choice.finish_reason = field<std::string>(cj, "finish_reason", "");
      c.choices.push_back(std::move(choice));
    }
    if (auto u = j.find("usage"); u != j.end() && !u->is_null()) {
      c.usage = Usage{field<long>(*u, "prompt_tokens", 0), field<long>(*u, "completion_tokens", 0),
                      field<long>(*u, "total_tokens", 0)};
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("malformed response: ") + e.what());
  }
}

std::string serialize_completion(const ChatCompletion& c) {
  ojson j;
  j["id"] = c.id;
  j["object"] = c.object;
  j["created"] = c.created;
  j["model"] = c.model;
  j["choices"] = ojson::array();
  for (const auto& choice : c.choices) {
    ojson cj;
    cj["index"] = choice.index;
    cj["message"] = ojson{{"role", choice.role}, {"content", choice.content}};
    if (choice.logprobs) {
      ojson content = ojson::array();
      for (const auto& t : *choice.logprobs) {
        ojson tj;
        tj["token"] = t.token;
        tj["logprob"] = t.logprob;
        tj["top_logprobs"] = ojson::array();
        for (const auto& x : t.top_logprobs) tj["top_logprobs"].push_back(ojson{{"token", x.token}, {"logprob", x.logprob}});
        content.push_back(std::move(tj));
      }
      cj["logprobs"] = ojson{{"content", std::move(content)}};
    } else {
      cj["logprobs"] = nullptr;
    }
    cj["finish_reason"] = choice.finish_reason;
    j["choices"].push_back(std::move(cj));
  }
  if (c.usage) {
    j["usage"] = ojson{{"prompt_tokens", c.usage->prompt_tokens},
                       {"completion_tokens", c.usage->completion_tokens},
                       {"total_tokens", c.usage->total_tokens}};
  }
  return j.dump();
}

std::string text_request_body(const TextGenRequest& request, const ChatEndpoint& endpoint) {
  ojson j;
  j["model"] = endpoint.model;
  j["messages"] = ojson::array({ojson{{"role", "user"}, {"content", request.prompt}}});
  j["temperature"] = request.temperature;
  j["max_tokens"] = request.max_tokens;
  return j.dump();
}

std::string vqa_request_body(const VqaRequest& request, const ChatEndpoint& endpoint,
                             const std::vector<std::string>& image_urls) {
  ojson content = ojson::array();
  for (const auto& url : image_urls) content.push_back(ojson{{"type", "image_url"}, {"image_url", ojson{{"url", url}}}});
  content.push_back(ojson{{"type", "text"}, {"text", request.question_text + "\n" + endpoint.vqa_instruction}});

  ojson j;
  j["model"] = endpoint.model;
  j["messages"] = ojson::array({ojson{{"role", "user"}, {"content", std::move(content)}}});
  j["temperature"] = 0.0;
  j["max_tokens"] = 1;
  j["logprobs"] = true;
  j["top_logprobs"] = endpoint.top_logprobs;
  return j.dump();
}

std::string completion_text(const ChatCompletion& completion) {
  if (completion.choices.empty()) throw Error(ErrorCode::ProtocolError, "response has no choices");
  return completion.choices.front().content;
}

TokenLogprobs first_token_logprobs(const ChatCompletion& completion, const AnswerTokens& tokens) {
  if (completion.choices.empty()) throw Error(ErrorCode::ProtocolError, "response has no choices");
  const auto& choice = completion.choices.front();
  if (!choice.logprobs || choice.logprobs->empty())
    throw Error(ErrorCode::ProtocolError, "response carries no token log-probabilities");
  const auto& first = choice.logprobs->front();

  std::map<std::string, double> raw;  // exact token string -> logprob
  raw.emplace(first.token, first.logprob);
  for (const auto& t : first.top_logprobs) raw.emplace(t.token, t.logprob);

  TokenLogprobs out;
  for (const auto& [token, lp] : raw) {
    if (!std::isfinite(lp)) continue;
    const auto key = trim(token);
    if (key != tokens.yes && key != tokens.no) continue;
    auto [it, inserted] = out.emplace(key, lp);
    if (!inserted) {
      const double hi = std::max(it->second, lp);
      it->second = hi + std::log(std::exp(it->second - hi) + std::exp(lp - hi));
    }
  }
  require_answer_token(out, tokens);
  return out;
}

}  // namespace wire

std::string resolve_image_url(const std::string& image_ref, const ChatEndpoint& endpoint) {
  auto starts_with = [](const std::string& s, std::string_view p) { return s.rfind(p, 0) == 0; };
  std::string url = image_ref;
  if (!starts_with(url, "http://") && !starts_with(url, "https://") && !starts_with(url, "data:") &&
      !starts_with(url, "file://")) {
    url = endpoint.image_url_template;
    for (auto pos = url.find("{id}"); pos != std::string::npos; pos = url.find("{id}", pos + image_ref.size()))
      url.replace(pos, 4, image_ref);
  }
  if (!starts_with(url, "file://")) return url;

  const std::string path = url.substr(7);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IngestionError, "cannot read image " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string mime = "image/jpeg";
  if (path.ends_with(".png")) mime = "image/png";
  else if (path.ends_with(".webp")) mime = "image/webp";
  return "data:" + mime + ";base64," + base64_encode(ss.str());
}

HttpChatClient::HttpChatClient(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be >= 0");
  if (!(endpoint_.timeout_s > 0.0)) throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
  if (endpoint_.top_logprobs < 5) throw Error(ErrorCode::InvalidConfig, "top_logprobs must be >= 5");
  if (!endpoint_.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str())) api_key_ = key;
  }
}

std::string HttpChatClient::post_once(const std::string& body) {
  httplib::Client client(endpoint_.base_url);
  const auto secs = static_cast<time_t>(endpoint_.timeout_s);
  const auto usecs = static_cast<time_t>((endpoint_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto result = client.Post(endpoint_.path, headers, body, "application/json");
  if (!result) {
    const auto err = result.error();
    const auto what = httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
      throw Error(ErrorCode::Timeout, endpoint_.base_url + ": " + what);
    throw Error(ErrorCode::BackendUnavailable, endpoint_.base_url + ": " + what);
  }
  const int status = result->status;
  if (status == 429 || status >= 500)
    throw Error(ErrorCode::BackendUnavailable, endpoint_.base_url + ": HTTP " + std::to_string(status));
  if (status < 200 || status >= 300)
    throw Error(ErrorCode::ProtocolError, endpoint_.base_url + ": HTTP " + std::to_string(status) + ": " + result->body);
  return result->body;
}

std::string HttpChatClient::post(const std::string& body) {
  double backoff = endpoint_.backoff_initial_s;
  for (int attempt = 0;; ++attempt) {
    try {
      return post_once(body);
    } catch (const Error& e) {
      const bool transport = e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::Timeout;
      if (!transport || attempt >= endpoint_.max_retries) throw;
      log_warn(std::string(e.what()) + "; retrying");
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
  }
}

std::string HttpChatClient::complete(const TextGenRequest& request) {
  validate(request);
  return wire::completion_text(wire::parse_completion(post(wire::text_request_body(request, endpoint_))));
}

TokenLogprobs HttpChatClient::answer_logprobs(const VqaRequest& request) {
  validate(request);
  std::vector<std::string> urls;
  urls.reserve(request.image_refs.size());
  for (const auto& ref : request.image_refs) urls.push_back(resolve_image_url(ref, endpoint_));
  const auto body = post(wire::vqa_request_body(request, endpoint_, urls));
  return wire::first_token_logprobs(wire::parse_completion(body), request.answer_tokens);
}

}  // namespace vqr
