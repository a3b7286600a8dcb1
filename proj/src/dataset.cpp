#include "vqr/dataset.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "vqr/hash.hpp"
#include "vqr/log.hpp"
#include "vqr/scoring.hpp"

namespace vqr {

std::string_view to_string(ExampleSource s) noexcept {
  return s == ExampleSource::TargetKnown ? "target_known" : "auto_annotated";
}

std::uint64_t SplitMix64::next() noexcept {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t SplitMix64::uniform_index(std::size_t n) noexcept {
  const auto bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return static_cast<std::size_t>(x % bound);
}

void ImageIndex::add(std::string image_id, Category category) {
  if (image_id.empty()) throw Error(ErrorCode::IngestionError, "empty image id in image index");
  if (!category_of_.emplace(image_id, category).second)
    throw Error(ErrorCode::IngestionError, "image '" + image_id + "' listed twice in image index");
  by_category_[category].push_back(std::move(image_id));
  ++size_;
}

std::span<const std::string> ImageIndex::images(Category category) const {
  auto it = by_category_.find(category);
  if (it == by_category_.end()) return {};
  return it->second;
}

namespace {

const std::vector<VisualQuestion>& questions_for(const Triplet& t, const QuestionCorpus& corpus) {
  auto it = corpus.find(t.query.query_id);
  if (it == corpus.end() || it->second.empty())
    throw Error(ErrorCode::MissingQuestions, "no questions for query '" + t.query.query_id + "'");
  return it->second;
}

void check_triplet(const Triplet& t) {
  if (t.target_image_id.empty())
    throw Error(ErrorCode::InvalidArgument, "query '" + t.query.query_id + "' has no target image");
  if (t.target_image_id == t.query.reference_image_id)
    throw Error(ErrorCode::InvalidArgument, "query '" + t.query.query_id + "' uses the same image as reference and target");
}

std::string pair_key(const VqaExample& e) {
  std::string key = e.question_text;
  for (const auto& id : e.image_refs) {
    key.push_back('\x1f');
    key += id;
  }
  return key;
}

struct PendingTask {
  SplitMix64 rng;
  std::vector<std::string_view> tried;
  int attempts = 0;
  bool done = false;
  std::optional<VqaExample> example;
};

// Draws an unused eligible image, or nullopt when none is left.
std::optional<std::string_view> draw_image(PendingTask& state, const AnnotationTask& task,
                                           std::span<const std::string> pool) {
  auto excluded = [&](std::string_view id) {
    return id == task.target_id || id == task.reference_id ||
           std::find(state.tried.begin(), state.tried.end(), id) != state.tried.end();
  };
  const auto eligible = static_cast<std::size_t>(std::count_if(pool.begin(), pool.end(), [&](const std::string& id) {
    return !excluded(id);
  }));
  if (eligible == 0) return std::nullopt;
  for (;;) {
    const std::string_view id = pool[state.rng.uniform_index(pool.size())];
    if (!excluded(id)) return id;
  }
}

}  // namespace

std::vector<VqaExample> positives_from_targets(std::span<const Triplet> triplets, const QuestionCorpus& corpus) {
  std::vector<VqaExample> out;
  for (const auto& t : triplets) {
    check_triplet(t);
    for (const auto& q : questions_for(t, corpus)) {
      VqaExample e;
      e.question_text = q.text();
      if (q.needs_reference()) e.image_refs.push_back(t.query.reference_image_id);
      e.image_refs.push_back(t.target_image_id);
      e.answer = q.expected_answer();
      e.source = ExampleSource::TargetKnown;
      e.origin_query_id = t.query.query_id;
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<AnnotationTask> annotation_tasks(std::span<const Triplet> triplets, const QuestionCorpus& corpus) {
  std::vector<AnnotationTask> tasks;
  for (const auto& t : triplets) {
    check_triplet(t);
    for (const auto& q : questions_for(t, corpus))
      tasks.push_back({t.query.query_id, q, t.query.reference_image_id, t.target_image_id, t.query.category});
  }
  return tasks;
}

AnnotationResult sample_and_annotate(std::span<const AnnotationTask> tasks, const ImageIndex& pool,
                                     VqaClient& annotator, const AnnotationOptions& options) {
  if (options.attempt_cap < 1) throw Error(ErrorCode::InvalidArgument, "attempt cap must be >= 1");
  if (options.fan_out < 1) throw Error(ErrorCode::InvalidArgument, "fan-out must be >= 1");

  std::vector<PendingTask> states;
  states.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) states.push_back({SplitMix64(mix64(options.seed) ^ mix64(i + 1)), {}, 0, false, {}});

  AnnotationResult result;
  for (int round = 0; round < options.attempt_cap; ++round) {
    std::vector<std::size_t> owners;
    std::vector<VqaRequest> requests;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      auto& st = states[i];
      if (st.done) continue;
      const auto& task = tasks[i];
      auto image = draw_image(st, task, pool.images(task.category));
      if (!image) {
        st.done = true;  // pool exhausted; counted below
        continue;
      }
      st.tried.push_back(*image);
      owners.push_back(i);
      requests.push_back(make_vqa_request(task.question, task.reference_id, std::string(*image), options.answer_tokens));
    }
    if (requests.empty()) break;

    auto outcomes = bounded_map(std::span<const VqaRequest>(requests), static_cast<std::size_t>(options.fan_out), annotator);
    result.requests += requests.size();

    for (std::size_t r = 0; r < requests.size(); ++r) {
      auto& st = states[owners[r]];
      const auto& task = tasks[owners[r]];
      ++st.attempts;
      const auto& outcome = outcomes[r];
      if (!outcome.ok()) {
        if (outcome.error->code() == ErrorCode::MissingBothAnswerTokens) continue;
        throw Error(ErrorCode::AnnotatorUnavailable, outcome.error->what());
      }
      ExpectedAnswerProbability p;
      try {
        p = answer_probability(*outcome.value, options.answer_tokens, task.question.expected_answer());
      } catch (const Error& e) {
        if (e.code() == ErrorCode::MissingBothAnswerTokens) continue;
        throw;
      }
      const Answer label = p.probability.predicted();
      if (label == task.question.expected_answer()) continue;
      VqaExample e;
      e.question_text = task.question.text();
      e.image_refs = requests[r].image_refs;
      e.answer = label;
      e.source = ExampleSource::AutoAnnotated;
      e.origin_query_id = task.origin_query_id;
      e.confidence = p.probability.of(label);
      st.example = std::move(e);
      st.done = true;
    }
  }

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (states[i].example) {
      result.examples.push_back(std::move(*states[i].example));
    } else {
      ++result.exhausted;
      log(LogLevel::Debug, std::string(error_name(ErrorCode::AttemptCapExhausted)) + ": query " +
                               tasks[i].origin_query_id + " question '" + tasks[i].question.text() + "' after " +
                               std::to_string(states[i].attempts) + " attempt(s)");
    }
  }
  if (result.exhausted > 0)
    log_warn(std::string(error_name(ErrorCode::AttemptCapExhausted)) + ": " + std::to_string(result.exhausted) + " of " +
             std::to_string(tasks.size()) + " question(s) found no opposite-label image");
  return result;
}

BalanceReport make_report(std::span<const VqaExample> examples, const std::map<std::string, Category>& category_of_query) {
  BalanceReport r;
  std::size_t dual = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_category;  // yes, total
  for (const auto& e : examples) {
    (e.answer == Answer::Yes ? r.yes : r.no) += 1;
    (e.source == ExampleSource::TargetKnown ? r.target_known : r.auto_annotated) += 1;
    dual += e.image_refs.size() == 2 ? 1 : 0;
    if (auto it = category_of_query.find(e.origin_query_id); it != category_of_query.end()) {
      auto& [yes, total] = per_category[std::string(to_string(it->second))];
      yes += e.answer == Answer::Yes ? 1 : 0;
      ++total;
    }
  }
  r.total_examples = examples.size();
  if (r.total_examples > 0) {
    r.yes_fraction = static_cast<double>(r.yes) / static_cast<double>(r.total_examples);
    r.dual_image_fraction = static_cast<double>(dual) / static_cast<double>(r.total_examples);
  }
  for (const auto& [cat, counts] : per_category)
    r.yes_fraction_by_category[cat] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
  return r;
}

BalancedCorpus balance(std::vector<VqaExample> positives, std::vector<VqaExample> annotated, std::uint64_t seed,
                       BalanceStrategy strategy, const std::map<std::string, Category>& category_of_query) {
  std::vector<VqaExample> combined = std::move(positives);
  std::unordered_set<std::string> known;
  for (const auto& e : combined) known.insert(pair_key(e));

  std::size_t duplicates = 0;
  for (auto& e : annotated) {
    if (!known.insert(pair_key(e)).second) {
      ++duplicates;
      continue;
    }
    combined.push_back(std::move(e));
  }

  std::vector<std::size_t> yes_idx;
  std::vector<std::size_t> no_idx;
  for (std::size_t i = 0; i < combined.size(); ++i) (combined[i].answer == Answer::Yes ? yes_idx : no_idx).push_back(i);
  if (yes_idx.empty() || no_idx.empty())
    throw Error(ErrorCode::OneClassEmpty, std::to_string(yes_idx.size()) + " Yes / " + std::to_string(no_idx.size()) + " No");

  std::vector<char> keep(combined.size(), 1);
  switch (strategy) {
    case BalanceStrategy::DownsampleMajority: {
      auto& majority = yes_idx.size() > no_idx.size() ? yes_idx : no_idx;
      const std::size_t target = std::min(yes_idx.size(), no_idx.size());
      // Partial Fisher-Yates: the first `target` slots become the kept sample.
      SplitMix64 rng(mix64(seed ^ 0x62616c616e6365ULL));
      for (std::size_t i = 0; i < target; ++i) std::swap(majority[i], majority[i + rng.uniform_index(majority.size() - i)]);
      for (std::size_t i = target; i < majority.size(); ++i) keep[majority[i]] = 0;
      break;
    }
  }

  BalancedCorpus out;
  for (std::size_t i = 0; i < combined.size(); ++i) {
    if (keep[i]) out.examples.push_back(std::move(combined[i]));
  }
  out.report = make_report(out.examples, category_of_query);
  out.report.duplicates_dropped = duplicates;
  return out;
}

}  // namespace vqr
