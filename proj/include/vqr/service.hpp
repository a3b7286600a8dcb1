#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "vqr/config.hpp"
#include "vqr/inference.hpp"

namespace httplib {
class Server;
}

namespace vqr {

struct ServiceResponse {
  int status = 200;
  std::string body;
};

/// Stateless POST /rerank handler. Body:
///   {"query": {"query_id", "reference_image_id", "text" | "captions", "category"},
///    "candidates": [{"candidate_id", "score"}, ...],
///    "questions": [{"question", "expected", "needs_reference"}, ...]}   (optional)
/// Questions are generated with the text client when absent. VQA calls from
/// all concurrent requests share one in-flight limit of rerank.fan_out.
class RerankService {
 public:
  RerankService(RerankConfig config, TextClient& text, VqaClient& vqa, int retry_budget = 2);
  ~RerankService();

  ServiceResponse handle(const std::string& body);

  // Binds and serves until stop(). Returns the bound port (port 0 picks a free one).
  int bind(const std::string& host, int port);
  void listen();
  void stop();

 private:
  RerankConfig config_;
  TextClient& text_;
  LimitedVqaClient vqa_;
  int retry_budget_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace vqr
