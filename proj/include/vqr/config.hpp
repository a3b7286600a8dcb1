#pragma once

#include <cstdint>
#include <string>

#include "vqr/domain.hpp"
#include "vqr/http_client.hpp"

namespace vqr {

enum class BackendMode { Live, Mock };

struct BackendConfig {
  ChatEndpoint endpoint;
  std::string fixtures;  // record file replayed in mock mode
  bool strict = true;    // mock mode: unknown requests are errors
};

struct PathConfig {
  std::string triplets;
  std::string questions;
  std::string cir_scores;
  std::string image_index;
  std::string rankings;
  std::string traces;
  std::string corpus;
  std::string report;
  std::string metrics;
};

/// Everything a pipeline run needs. Loaded from one JSON file; every field
/// has a default and command-line flags override individual fields.
/// Credentials are never stored here, only the names of environment variables.
struct AppConfig {
  RerankConfig rerank;
  BackendMode backend = BackendMode::Mock;
  BackendConfig text;
  BackendConfig vqa;
  BackendConfig annotator;
  int retry_budget = 2;
  int attempt_cap = 5;
  std::uint64_t seed = 0;
  std::string cache_dir;
  std::string prompt_template;  // empty = built-in
  PathConfig paths;
  std::string host = "127.0.0.1";
  int port = 8080;

  static AppConfig from_json_text(const std::string& text);
  static AppConfig load(const std::string& path);
  void validate() const;
};

BackendMode parse_backend_mode(const std::string& s);

}  // namespace vqr
