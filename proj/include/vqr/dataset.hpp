#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqr/domain.hpp"
#include "vqr/inference.hpp"
#include "vqr/questions.hpp"

namespace vqr {

/// A CIR training/evaluation triplet: query plus its annotated target.
struct Triplet {
  RetrievalQuery query;
  std::string target_image_id;
};

enum class ExampleSource { TargetKnown, AutoAnnotated };

std::string_view to_string(ExampleSource s) noexcept;

struct VqaExample {
  std::string question_text;
  std::vector<std::string> image_refs;  // (reference, candidate) when two
  Answer answer = Answer::Yes;
  ExampleSource source = ExampleSource::TargetKnown;
  std::string origin_query_id;
  std::optional<double> confidence;  // annotator probability of `answer`; not serialized

  friend bool operator==(const VqaExample& a, const VqaExample& b) {
    return a.question_text == b.question_text && a.image_refs == b.image_refs && a.answer == b.answer &&
           a.source == b.source && a.origin_query_id == b.origin_query_id;
  }
};

/// Images available for negative sampling, grouped by category.
class ImageIndex {
 public:
  void add(std::string image_id, Category category);
  std::span<const std::string> images(Category category) const;
  std::size_t size() const noexcept { return size_; }

 private:
  std::map<Category, std::vector<std::string>> by_category_;
  std::map<std::string, Category> category_of_;
  std::size_t size_ = 0;
};

std::vector<VqaExample> positives_from_targets(std::span<const Triplet> triplets, const QuestionCorpus& corpus);

/// One question to be answered on sampled non-target images.
struct AnnotationTask {
  std::string origin_query_id;
  VisualQuestion question;
  std::string reference_id;
  std::string target_id;
  Category category = Category::Other;
};

std::vector<AnnotationTask> annotation_tasks(std::span<const Triplet> triplets, const QuestionCorpus& corpus);

struct AnnotationOptions {
  std::uint64_t seed = 0;
  int attempt_cap = 5;
  int fan_out = 8;
  AnswerTokens answer_tokens;
};

struct AnnotationResult {
  std::vector<VqaExample> examples;  // in task order
  std::size_t requests = 0;
  std::size_t exhausted = 0;  // tasks that hit the attempt cap
};

/// For every task, samples same-category images (excluding the task's target
/// and reference) and asks the annotator until it answers the opposite of the
/// question's expected answer or the attempt cap is reached.
AnnotationResult sample_and_annotate(std::span<const AnnotationTask> tasks, const ImageIndex& pool,
                                     VqaClient& annotator, const AnnotationOptions& options);

struct BalanceReport {
  std::size_t total_examples = 0;
  std::size_t yes = 0;
  std::size_t no = 0;
  std::size_t target_known = 0;
  std::size_t auto_annotated = 0;
  std::size_t duplicates_dropped = 0;
  double yes_fraction = 0.0;
  double dual_image_fraction = 0.0;
  std::map<std::string, double> yes_fraction_by_category;
};

struct BalancedCorpus {
  std::vector<VqaExample> examples;
  BalanceReport report;
};

enum class BalanceStrategy { DownsampleMajority };

/// Drops auto-annotated duplicates of target-known pairs, then removes
/// seeded-random majority-class examples until Yes and No counts match.
BalancedCorpus balance(std::vector<VqaExample> positives, std::vector<VqaExample> annotated, std::uint64_t seed,
                       BalanceStrategy strategy = BalanceStrategy::DownsampleMajority,
                       const std::map<std::string, Category>& category_of_query = {});

BalanceReport make_report(std::span<const VqaExample> examples, const std::map<std::string, Category>& category_of_query);

/// Small counter-based generator (SplitMix64); identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() noexcept;
  std::size_t uniform_index(std::size_t n) noexcept;  // uniform in [0, n), n > 0

 private:
  std::uint64_t state_;
};

}  // namespace vqr
