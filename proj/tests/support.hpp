#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vqr/domain.hpp"
#include "vqr/inference.hpp"
#include "vqr/rerank.hpp"

namespace vqr::test {

inline std::string data_dir() { return VQR_TEST_DATA_DIR; }
inline std::string data_path(const std::string& name) { return data_dir() + "/" + name; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vqr-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Golden re-rank fixture: one query, eight candidates, n = 4.

inline RetrievalQuery golden_query() {
  return {"q-golden", "R", "is black with no sleeves and longer than the reference", Category::Dress};
}

inline std::vector<CandidateInput> golden_candidates() {
  return {{"A", 0.950}, {"B", 0.945}, {"C", 0.940}, {"D", 0.930},
          {"E", 0.925}, {"F", 0.60},  {"G", 0.40},  {"H", 0.20}};
}

inline std::vector<VisualQuestion> golden_questions() {
  return {{"Is the dress black?", Answer::Yes, false},
          {"Does the dress have sleeves?", Answer::No, false},
          {"Is the dress longer than in the reference image?", Answer::Yes, true}};
}

inline RerankConfig golden_config() {
  RerankConfig c;
  c.lambda_vqa = 0.068;
  c.k = 0.8375;
  c.n = 4;
  return c;
}

// Answer log-probabilities per top-4 candidate, one map per golden question.
inline std::vector<std::pair<std::string, std::vector<TokenLogprobs>>> golden_logprobs() {
  return {
      {"A", {{{"Yes", -2.5}, {"No", -0.1}}, {{"Yes", -0.3}, {"No", -1.4}}, {{"Yes", -1.2}, {"No", -0.4}}}},
      {"B", {{{"Yes", -0.05}, {"No", -3.2}}, {{"No", -0.02}}, {{"Yes", -0.2}, {"No", -1.8}, {"Maybe", -4.0}}}},
      {"C", {{{"Yes", -0.7}, {"No", -0.7}}, {{"Yes", -1.6}, {"No", -0.25}}, {{"Yes", -0.01}}}},
      {"D", {{{"Yes", -0.08}, {"No", -2.6}}, {{"Yes", -2.9}, {"No", -0.06}}, {{"Yes", -0.15}, {"No", -2.0}}}},
  };
}

inline std::shared_ptr<RecordStore> golden_vqa_store() {
  auto store = std::make_shared<RecordStore>();
  MockVqaClient loader(store);
  const auto q = golden_query();
  const auto questions = golden_questions();
  for (const auto& [cand, lps] : golden_logprobs()) {
    for (std::size_t i = 0; i < questions.size(); ++i)
      loader.add_fixture(make_vqa_request(questions[i], q.reference_image_id, cand, AnswerTokens{}), lps[i]);
  }
  return store;
}

struct GoldenExpectation {
  const char* id;
  double cir_norm;
  double vqa;  // negative = not re-ranked
  double fused;
};

// Independently computed at 40 significant digits.
inline const std::vector<GoldenExpectation>& golden_expected() {
  static const std::vector<GoldenExpectation> v{
      {"B", 0.99333333333333333333, 0.92370859341340492814, 1.0592166012885698984},
      {"C", 0.98666666666666666667, 0.76139315398274024631, 1.0477207941316405423},
      {"A", 1.0, 0.21431270325706411768, 1.0420883630224841527},
      {"D", 0.97333333333333333333, 0.91148620668064779093, 1.0388682355860985863},
      {"E", 0.96666666666666666667, -1.0, 0.96666666666666666667},
      {"F", 0.53333333333333333333, -1.0, 0.53333333333333333333},
      {"G", 0.26666666666666666667, -1.0, 0.26666666666666666667},
      {"H", 0.0, -1.0, 0.0},
  };
  return v;
}

// ---------------------------------------------------------------------------

/// Deterministic VQA backend that records call counts and the peak number of
/// concurrent calls. Optionally fails requests whose question text matches.
class InstrumentedVqaClient : public VqaClient {
 public:
  explicit InstrumentedVqaClient(std::chrono::microseconds delay = std::chrono::microseconds(200))
      : delay_(delay) {}

  TokenLogprobs answer_logprobs(const VqaRequest& request) override {
    const int now = ++in_flight_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    ++calls_;
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    --in_flight_;
    if (!fail_substring_.empty() && request.question_text.find(fail_substring_) != std::string::npos)
      throw Error(ErrorCode::Timeout, "injected failure");
    return synthetic_logprobs(request);
  }

  void fail_questions_containing(std::string s) { fail_substring_ = std::move(s); }
  std::size_t calls() const { return calls_.load(); }
  int peak_in_flight() const { return peak_.load(); }

 private:
  std::chrono::microseconds delay_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<std::size_t> calls_{0};
  std::string fail_substring_;
};

/// Text backend replaying a fixed script of outputs, one per call.
class ScriptedTextClient : public TextClient {
 public:
  explicit ScriptedTextClient(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}
  std::string complete(const TextGenRequest& request) override {
    prompts_.push_back(request.prompt);
    if (next_ >= outputs_.size()) throw Error(ErrorCode::ProtocolError, "script exhausted");
    return outputs_[next_++];
  }
  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  std::vector<std::string> outputs_;
  std::size_t next_ = 0;
  std::vector<std::string> prompts_;
};

}  // namespace vqr::test
