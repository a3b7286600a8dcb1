#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "vqr/inference.hpp"

namespace vqr {

/// Connection settings for one OpenAI-compatible chat-completions backend.
struct ChatEndpoint {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model;
  // Name of the environment variable holding the bearer token; empty = no auth.
  std::string api_key_env;
  double timeout_s = 60.0;
  int max_retries = 2;
  double backoff_initial_s = 0.5;
  int top_logprobs = 10;
  // "{id}" is replaced by the image reference. Refs that already look like
  // URLs (http://, https://, data:) are sent unchanged; file:// URLs are
  // inlined as base64 data URLs.
  std::string image_url_template = "{id}";
  std::string vqa_instruction = "Answer with exactly one word: Yes or No.";
};

namespace wire {

struct TopLogprob {
  std::string token;
  double logprob = 0.0;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  std::vector<TopLogprob> top_logprobs;
};

struct Choice {
  int index = 0;
  std::string role = "assistant";
  std::string content;
  std::optional<std::vector<TokenLogprob>> logprobs;
  std::string finish_reason;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;
};

/// The subset of a chat-completions response the engine reads. Parsing
/// ignores unknown fields; serialization emits fields in a fixed order.
struct ChatCompletion {
  std::string id;
  std::string object = "chat.completion";
  long created = 0;
  std::string model;
  std::vector<Choice> choices;
  std::optional<Usage> usage;
};

ChatCompletion parse_completion(std::string_view body);  // throws ProtocolError
std::string serialize_completion(const ChatCompletion& completion);

std::string text_request_body(const TextGenRequest& request, const ChatEndpoint& endpoint);
std::string vqa_request_body(const VqaRequest& request, const ChatEndpoint& endpoint,
                             const std::vector<std::string>& image_urls);

std::string completion_text(const ChatCompletion& completion);  // first choice content
/// Log-probabilities of the answer tokens at the first generated position.
/// Tokens are matched after trimming whitespace; repeated matches are
/// combined by log-sum-exp.
TokenLogprobs first_token_logprobs(const ChatCompletion& completion, const AnswerTokens& tokens);

}  // namespace wire

std::string resolve_image_url(const std::string& image_ref, const ChatEndpoint& endpoint);

/// Live client for both roles over HTTP. Transport failures (connection,
/// timeout, 5xx, 429) are retried with exponential backoff; protocol errors
/// are not.
class HttpChatClient : public TextClient, public VqaClient {
 public:
  explicit HttpChatClient(ChatEndpoint endpoint);

  std::string complete(const TextGenRequest& request) override;
  TokenLogprobs answer_logprobs(const VqaRequest& request) override;

  const ChatEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  std::string post(const std::string& body);
  std::string post_once(const std::string& body);

  ChatEndpoint endpoint_;
  std::string api_key_;
};

}  // namespace vqr
