#include "vqr/io.hpp"

#include <fstream>
#include <sstream>

namespace vqr::io {

namespace {

using ojson = nlohmann::ordered_json;

[[noreturn]] void fail_at(const std::string& path, std::size_t line_no, ErrorCode code, const std::string& msg) {
  throw Error(code, path + ":" + std::to_string(line_no) + ": " + msg);
}

std::string str_field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw Error(ErrorCode::IngestionError, std::string("missing field '") + name + "'");
  if (!it->is_string()) throw Error(ErrorCode::IngestionError, std::string("field '") + name + "' must be a string");
  return it->get<std::string>();
}

double num_field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw Error(ErrorCode::IngestionError, std::string("missing field '") + name + "'");
  if (!it->is_number()) throw Error(ErrorCode::IngestionError, std::string("field '") + name + "' must be a number");
  return it->get<double>();
}

std::optional<double> opt_num(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw Error(ErrorCode::IngestionError, std::string("field '") + name + "' must be a number or null");
  return it->get<double>();
}

template <typename T>
ojson nullable(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

Answer answer_field(const nlohmann::json& j, const char* name) {
  auto a = parse_answer(str_field(j, name));
  if (!a) throw Error(ErrorCode::InvalidExpectedAnswer, std::string("field '") + name + "' must be Yes or No");
  return *a;
}

}  // namespace

std::string header_line(std::string_view kind) {
  return "# vqr-" + std::string(kind) + " v" + std::to_string(kFormatVersion);
}

RecordReader::RecordReader(std::string path, std::string kind, bool header_required)
    : path_(std::move(path)), kind_(std::move(kind)), header_required_(header_required) {}

void RecordReader::for_each(const std::function<void(std::size_t, const nlohmann::json&)>& fn) const {
  std::ifstream in(path_);
  if (!in) throw Error(ErrorCode::IngestionError, "cannot open " + kind_ + " file '" + path_ + "'");
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (!line.empty() && line.front() == '#') {
        if (line != header_line(kind_))
          fail_at(path_, line_no, ErrorCode::IngestionError, "expected header '" + header_line(kind_) + "', got '" + line + "'");
        continue;
      }
      if (header_required_) fail_at(path_, line_no, ErrorCode::IngestionError, "missing header '" + header_line(kind_) + "'");
    }
    if (trim(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail_at(path_, line_no, ErrorCode::IngestionError, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) fail_at(path_, line_no, ErrorCode::IngestionError, "record is not a JSON object");
    try {
      fn(line_no, record);
    } catch (const Error& e) {
      fail_at(path_, line_no, e.code(), e.message());
    } catch (const nlohmann::json::exception& e) {
      fail_at(path_, line_no, ErrorCode::IngestionError, e.what());
    }
  }
}

RecordWriter::RecordWriter(const std::string& path, std::string_view kind)
    : path_(path), out_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc)) {
  if (!*out_) throw Error(ErrorCode::IngestionError, "cannot write '" + path + "'");
  *out_ << header_line(kind) << '\n';
}

RecordWriter::~RecordWriter() {
  if (out_) out_->close();
}

void RecordWriter::write(const nlohmann::ordered_json& record) { *out_ << record.dump() << '\n'; }

void RecordWriter::close() {
  out_->flush();
  if (!*out_) throw Error(ErrorCode::IngestionError, "write failed for '" + path_ + "'");
  out_->close();
}

// ---------------------------------------------------------------------------

std::vector<Triplet> read_triplets(const std::string& path) {
  std::vector<Triplet> out;
  QueryValidator validator;
  RecordReader(path, "triplets", false).for_each([&](std::size_t, const nlohmann::json& j) {
    RawQueryRecord raw;
    raw.query_id = str_field(j, "query_id");
    raw.reference_image_id = j.contains("candidate") ? str_field(j, "candidate") : str_field(j, "reference");
    if (j.contains("text")) {
      raw.text = str_field(j, "text");
    } else {
      auto caps = j.find("captions");
      if (caps == j.end() || !caps->is_array())
        throw Error(ErrorCode::IngestionError, "record needs 'captions' (array) or 'text'");
      for (const auto& c : *caps) {
        if (!c.is_string()) throw Error(ErrorCode::IngestionError, "captions must be strings");
        raw.captions.push_back(c.get<std::string>());
      }
    }
    raw.category = j.contains("category") ? str_field(j, "category") : "other";
    Triplet t{validator.validate(raw), j.contains("target") ? str_field(j, "target") : std::string()};
    out.push_back(std::move(t));
  });
  return out;
}

std::map<std::string, Category> categories_of(const std::vector<Triplet>& triplets) {
  std::map<std::string, Category> out;
  for (const auto& t : triplets) out.emplace(t.query.query_id, t.query.category);
  return out;
}

TargetsByQuery targets_of(const std::vector<Triplet>& triplets) {
  TargetsByQuery out;
  for (const auto& t : triplets) {
    if (!t.target_image_id.empty()) out.emplace(t.query.query_id, t.target_image_id);
  }
  return out;
}

std::map<std::string, std::vector<CandidateInput>> read_cir_scores(const std::string& path) {
  std::map<std::string, std::vector<CandidateInput>> out;
  RecordReader(path, "cir-scores", false).for_each([&](std::size_t, const nlohmann::json& j) {
    auto qid = str_field(j, "query_id");
    out[qid].push_back({str_field(j, "candidate_id"), num_field(j, "score")});
  });
  return out;
}

ImageIndex read_image_index(const std::string& path) {
  ImageIndex index;
  RecordReader(path, "image-index", false).for_each([&](std::size_t, const nlohmann::json& j) {
    index.add(str_field(j, "image_id"), parse_category(str_field(j, "category")));
  });
  if (index.size() == 0) throw Error(ErrorCode::IngestionError, "image index '" + path + "' is empty");
  return index;
}

// ---------------------------------------------------------------------------

ojson question_to_json(const VisualQuestion& q) {
  ojson j;
  j["question"] = q.text();
  j["expected"] = std::string(to_string(q.expected_answer()));
  j["needs_reference"] = q.needs_reference();
  return j;
}

VisualQuestion question_from_json(const nlohmann::json& j) {
  auto flag = j.find("needs_reference");
  if (flag == j.end() || !flag->is_boolean()) throw Error(ErrorCode::IngestionError, "'needs_reference' must be a boolean");
  return VisualQuestion(str_field(j, "question"), answer_field(j, "expected"), flag->get<bool>());
}

void write_question_corpus(const std::string& path, const QuestionCorpus& corpus) {
  RecordWriter w(path, "questions");
  for (const auto& [qid, questions] : corpus) {
    ojson rec;
    rec["query_id"] = qid;
    rec["questions"] = ojson::array();
    for (const auto& q : questions) rec["questions"].push_back(question_to_json(q));
    w.write(rec);
  }
  w.close();
}

QuestionCorpus read_question_corpus(const std::string& path) {
  QuestionCorpus corpus;
  RecordReader(path, "questions", true).for_each([&](std::size_t, const nlohmann::json& j) {
    auto qid = str_field(j, "query_id");
    std::vector<VisualQuestion> qs;
    for (const auto& qj : j.at("questions")) qs.push_back(question_from_json(qj));
    if (!corpus.emplace(qid, std::move(qs)).second) throw Error(ErrorCode::DuplicateQueryId, "'" + qid + "'");
  });
  return corpus;
}

// ---------------------------------------------------------------------------

ojson score_to_json(const CandidateScore& s) {
  ojson j;
  j["candidate_id"] = s.candidate_image_id;
  j["cir_score_raw"] = s.cir_score_raw;
  j["cir_score_norm"] = s.cir_score_norm;
  j["vqa_score"] = nullable(s.vqa_score);
  j["fused_score"] = s.fused_score;
  j["reranked"] = s.reranked();
  return j;
}

CandidateScore score_from_json(const nlohmann::json& j) {
  CandidateScore s;
  s.candidate_image_id = str_field(j, "candidate_id");
  s.cir_score_raw = num_field(j, "cir_score_raw");
  s.cir_score_norm = num_field(j, "cir_score_norm");
  s.vqa_score = opt_num(j, "vqa_score");
  s.fused_score = num_field(j, "fused_score");
  return s;
}

ojson ranking_record(const std::string& query_id, const Ranking& ranking) {
  ojson rec;
  rec["query_id"] = query_id;
  rec["ranking"] = ojson::array();
  for (const auto& s : ranking) rec["ranking"].push_back(score_to_json(s));
  return rec;
}

void write_rankings(const std::string& path, const RankingsByQuery& rankings) {
  RecordWriter w(path, "rankings");
  for (const auto& [qid, ranking] : rankings) w.write(ranking_record(qid, ranking));
  w.close();
}

RankingsByQuery read_rankings(const std::string& path) {
  RankingsByQuery out;
  RecordReader(path, "rankings", true).for_each([&](std::size_t, const nlohmann::json& j) {
    auto qid = str_field(j, "query_id");
    Ranking r;
    for (const auto& sj : j.at("ranking")) r.push_back(score_from_json(sj));
    if (!out.emplace(qid, std::move(r)).second) throw Error(ErrorCode::DuplicateQueryId, "'" + qid + "'");
  });
  return out;
}

ojson trace_record(const std::string& query_id, const CandidateTrace& trace) {
  ojson rec;
  rec["query_id"] = query_id;
  rec["candidate_id"] = trace.candidate_image_id;
  rec["vqa_score"] = nullable(trace.vqa_score);
  rec["demoted"] = trace.demoted;
  rec["entries"] = ojson::array();
  for (const auto& e : trace.entries) {
    ojson ej = question_to_json(e.question);
    if (e.ok()) {
      ej["p_yes"] = e.probability->p_yes;
      ej["p_no"] = e.probability->p_no;
      ej["predicted"] = std::string(to_string(e.predicted()));
      ej["probability"] = e.probability_of_expected();
      ej["error"] = nullptr;
    } else {
      ej["p_yes"] = nullptr;
      ej["p_no"] = nullptr;
      ej["predicted"] = nullptr;
      ej["probability"] = nullptr;
      ej["error"] = e.error;
    }
    rec["entries"].push_back(std::move(ej));
  }
  return rec;
}

void write_traces(const std::string& path, const std::map<std::string, ReasoningTrace>& traces) {
  RecordWriter w(path, "traces");
  for (const auto& [qid, trace] : traces) {
    for (const auto& c : trace) w.write(trace_record(qid, c));
  }
  w.close();
}

std::vector<StoredTrace> read_traces(const std::string& path) {
  std::vector<StoredTrace> out;
  RecordReader(path, "traces", true).for_each([&](std::size_t, const nlohmann::json& j) {
    StoredTrace st;
    st.query_id = str_field(j, "query_id");
    st.trace.candidate_image_id = str_field(j, "candidate_id");
    st.trace.vqa_score = opt_num(j, "vqa_score");
    st.trace.demoted = j.at("demoted").get<bool>();
    for (const auto& ej : j.at("entries")) {
      TraceEntry e{question_from_json(ej), std::nullopt, {}};
      if (auto p_yes = opt_num(ej, "p_yes")) {
        e.probability = AnswerProbability{*p_yes, num_field(ej, "p_no")};
      } else {
        e.error = ej.value("error", std::string());
      }
      st.trace.entries.push_back(std::move(e));
    }
    out.push_back(std::move(st));
  });
  return out;
}

// ---------------------------------------------------------------------------

ojson example_record(const VqaExample& e) {
  ojson j;
  j["question"] = e.question_text;
  j["images"] = e.image_refs;
  j["answer"] = std::string(to_string(e.answer));
  j["source"] = std::string(to_string(e.source));
  j["origin_query_id"] = e.origin_query_id;
  return j;
}

void write_corpus(const std::string& path, const std::vector<VqaExample>& examples) {
  RecordWriter w(path, "corpus");
  for (const auto& e : examples) w.write(example_record(e));
  w.close();
}

std::vector<VqaExample> read_corpus(const std::string& path) {
  std::vector<VqaExample> out;
  RecordReader(path, "corpus", true).for_each([&](std::size_t, const nlohmann::json& j) {
    VqaExample e;
    e.question_text = str_field(j, "question");
    e.image_refs = j.at("images").get<std::vector<std::string>>();
    e.answer = answer_field(j, "answer");
    const auto source = str_field(j, "source");
    if (source == "target_known") e.source = ExampleSource::TargetKnown;
    else if (source == "auto_annotated") e.source = ExampleSource::AutoAnnotated;
    else throw Error(ErrorCode::IngestionError, "unknown source '" + source + "'");
    e.origin_query_id = str_field(j, "origin_query_id");
    out.push_back(std::move(e));
  });
  return out;
}

ojson report_to_json(const BalanceReport& r) {
  ojson j;
  j["total_examples"] = r.total_examples;
  j["yes"] = r.yes;
  j["no"] = r.no;
  j["yes_fraction"] = r.yes_fraction;
  j["dual_image_fraction"] = r.dual_image_fraction;
  j["target_known"] = r.target_known;
  j["auto_annotated"] = r.auto_annotated;
  j["duplicates_dropped"] = r.duplicates_dropped;
  j["yes_fraction_by_category"] = ojson::object();
  for (const auto& [cat, f] : r.yes_fraction_by_category) j["yes_fraction_by_category"][cat] = f;
  return j;
}

void write_report(const std::string& path, std::string_view kind, const ojson& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IngestionError, "cannot write '" + path + "'");
  out << header_line(kind) << '\n' << body.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IngestionError, "write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IngestionError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace vqr::io
