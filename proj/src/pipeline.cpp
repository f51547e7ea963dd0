#include "datapool/pipeline.hpp"

#include <unordered_set>

#include "datapool/error.hpp"

namespace datapool {
namespace {

constexpr std::array<const char*, kStageCount> kStageNames{
    "received", "normalized", "filtered", "exact_dedup", "near_dedup", "cross_corpus_dedup",
    "accepted"};

void record_stage(StageReport& report, Stage stage, const std::vector<CandidateDoc>& docs) {
  StageEntry& e = report.at(stage);
  e.documents = static_cast<std::int64_t>(docs.size());
  e.tokens = 0;
  for (const auto& d : docs) e.tokens += d.tokens;
  e.complete = true;
}

const char* cross_corpus_reason(CorpusSource source) {
  switch (source) {
    case CorpusSource::consumer_corpus: return "consumer_duplicate";
    case CorpusSource::public_corpus: return "public_duplicate";
    case CorpusSource::contributor: return "contributor_duplicate";
  }
  return "contributor_duplicate";
}

}  // namespace

const char* to_string(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

std::vector<ParsedRecord> parse_jsonl(std::string_view bytes) {
  std::vector<ParsedRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < bytes.size()) {
    std::size_t nl = bytes.find('\n', start);
    if (nl == std::string_view::npos) nl = bytes.size();
    const std::string_view line = bytes.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    ParsedRecord rec;
    rec.line_no = line_no;
    const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_object()) {
      const auto text = j.find("text");
      const auto meta = j.find("meta");
      const bool meta_ok = meta == j.end() || meta->is_object();
      if (text != j.end() && text->is_string() && meta_ok) {
        rec.text = text->get<std::string>();
        if (meta != j.end()) rec.meta = *meta;
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

StageReport StageReport::pending(std::string submission_id) {
  StageReport r;
  r.submission_id = std::move(submission_id);
  for (std::size_t i = 0; i < kStageCount; ++i) r.stages[i].stage = static_cast<Stage>(i);
  return r;
}

nlohmann::json StageReport::to_json() const {
  nlohmann::json stage_list = nlohmann::json::array();
  for (const auto& s : stages) {
    stage_list.push_back({{"stage", to_string(s.stage)},
                          {"documents", s.documents},
                          {"tokens", s.tokens},
                          {"status", s.complete ? "complete" : "pending"}});
  }
  nlohmann::json tallies = nlohmann::json::object();
  for (const auto& [reason, n] : rejections) tallies[reason] = n;
  return {{"submission_id", submission_id},
          {"stages", std::move(stage_list)},
          {"rejections", std::move(tallies)},
          {"accepted_tokens", complete() ? accepted_tokens() : 0}};
}

StageReport StageReport::from_json(const nlohmann::json& j) {
  StageReport r = pending(j.at("submission_id").get<std::string>());
  const auto& list = j.at("stages");
  if (list.size() != kStageCount) {
    fail(ErrorKind::validation, "invalid_report", "stage report must list every stage");
  }
  for (std::size_t i = 0; i < kStageCount; ++i) {
    if (list[i].at("stage").get<std::string>() != kStageNames[i]) {
      fail(ErrorKind::validation, "invalid_report", "stages out of order");
    }
    r.stages[i].documents = list[i].at("documents").get<std::int64_t>();
    r.stages[i].tokens = list[i].at("tokens").get<std::int64_t>();
    r.stages[i].complete = list[i].at("status").get<std::string>() == "complete";
  }
  for (const auto& [reason, n] : j.at("rejections").items()) r.rejections[reason] = n.get<std::int64_t>();
  return r;
}

PreparedSubmission prepare_submission(const std::string& submission_id, std::string_view jsonl,
                                      const PipelineOptions& options, const Tokenizer& tokenizer) {
  options.rules.validate();
  PreparedSubmission prepared;
  StageReport& report = prepared.report;
  report = StageReport::pending(submission_id);

  const std::vector<ParsedRecord> records = parse_jsonl(jsonl);
  std::vector<CandidateDoc> docs;
  std::int64_t received_tokens = 0;
  for (const auto& rec : records) {
    if (!rec.text) {
      ++report.rejections["unparseable"];
      continue;
    }
    CandidateDoc doc;
    doc.line_no = rec.line_no;
    try {
      doc.normalized = normalize(*rec.text);
    } catch (const Error&) {
      ++report.rejections["unparseable"];
      continue;
    }
    received_tokens += tokenizer.count(*rec.text);
    doc.tokens = tokenizer.count(doc.normalized);
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) {
    fail(ErrorKind::validation, "no_parseable_records", "no parseable records");
  }
  report.at(Stage::received) =
      StageEntry{Stage::received, static_cast<std::int64_t>(records.size()), received_tokens, true};
  record_stage(report, Stage::normalized, docs);

  std::vector<CandidateDoc> kept;
  for (auto& doc : docs) {
    const FilterVerdict verdict = apply_filters(doc.normalized, options.rules);
    if (!verdict.accepted()) {
      ++report.rejections[*verdict.rejection];
      continue;
    }
    kept.push_back(std::move(doc));
  }
  record_stage(report, Stage::filtered, kept);

  // In-submission exact duplicates, first occurrence in file order wins.
  std::unordered_set<Digest128, Digest128Hash> seen;
  docs.clear();
  for (auto& doc : kept) {
    doc.digest = exact_fingerprint(doc.normalized);
    if (!seen.insert(doc.digest).second) {
      ++report.rejections["exact_duplicate"];
      continue;
    }
    docs.push_back(std::move(doc));
  }
  record_stage(report, Stage::exact_dedup, docs);

  const MinHasher hasher(options.minhash);
  DedupIndex local(options.minhash, options.lsh);
  kept.clear();
  for (auto& doc : docs) {
    doc.signature = hasher.sign(doc.normalized);
    if (!local.near_candidates(doc.signature).empty()) {
      ++report.rejections["near_duplicate"];
      continue;
    }
    local.insert(doc.digest, doc.signature, CorpusSource::contributor, {}, Timestamp{});
    kept.push_back(std::move(doc));
  }
  record_stage(report, Stage::near_dedup, kept);
  prepared.survivors = std::move(kept);
  return prepared;
}

PipelineResult finalize_submission(PreparedSubmission prepared, const DedupIndex& index) {
  PipelineResult result;
  result.report = std::move(prepared.report);
  for (auto& doc : prepared.survivors) {
    const DuplicateQuery hit = index.query(doc.digest, doc.signature);
    if (const auto* exact = std::get_if<ExactHit>(&hit)) {
      ++result.report.rejections[cross_corpus_reason(exact->source)];
      continue;
    }
    if (const auto* near = std::get_if<NearHit>(&hit)) {
      ++result.report.rejections[cross_corpus_reason(near->source)];
      continue;
    }
    result.accepted.push_back(std::move(doc));
  }
  record_stage(result.report, Stage::cross_corpus_dedup, result.accepted);
  record_stage(result.report, Stage::accepted, result.accepted);
  return result;
}

void commit_accepted(const PipelineResult& result, DedupIndex& index, const std::string& owner,
                     Timestamp accepted_at) {
  for (const auto& doc : result.accepted) {
    index.insert(doc.digest, doc.signature, CorpusSource::contributor, owner, accepted_at);
  }
}

PipelineResult run_pipeline(const std::string& submission_id, std::string_view jsonl,
                            const FilterRuleSet& rules, DedupIndex& index,
                            const std::string& owner, Timestamp accepted_at,
                            const Tokenizer& tokenizer) {
  PipelineOptions options{rules, index.minhash_params(), index.lsh_params()};
  PipelineResult result =
      finalize_submission(prepare_submission(submission_id, jsonl, options, tokenizer), index);
  commit_accepted(result, index, owner, accepted_at);
  return result;
}

}  // namespace datapool
