#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "datapool/dedup.hpp"
#include "datapool/filters.hpp"
#include "datapool/text.hpp"

namespace datapool {

/// One non-blank line of a JSON Lines submission.
struct ParsedRecord {
  std::size_t line_no = 0;
  /// Absent when the line is not an object with a string "text" field.
  std::optional<std::string> text;
  nlohmann::json meta = nlohmann::json::object();
};

/// Splits JSONL bytes into records. Never throws on bad lines; they come back
/// with `text` unset. Blank lines are skipped.
std::vector<ParsedRecord> parse_jsonl(std::string_view bytes);

enum class Stage {
  received,
  normalized,
  filtered,
  exact_dedup,
  near_dedup,
  cross_corpus_dedup,
  accepted,
};
inline constexpr std::size_t kStageCount = 7;

const char* to_string(Stage stage);

struct StageEntry {
  Stage stage = Stage::received;
  std::int64_t documents = 0;
  std::int64_t tokens = 0;
  bool complete = false;

  friend bool operator==(const StageEntry&, const StageEntry&) = default;
};

/// Per-submission token funnel. Surviving documents and tokens never increase
/// from one stage to the next.
struct StageReport {
  std::string submission_id;
  std::array<StageEntry, kStageCount> stages{};
  /// Rejection reason -> document count.
  std::map<std::string, std::int64_t> rejections;

  /// Report with every stage pending.
  static StageReport pending(std::string submission_id);

  StageEntry& at(Stage s) { return stages[static_cast<std::size_t>(s)]; }
  const StageEntry& at(Stage s) const { return stages[static_cast<std::size_t>(s)]; }
  std::int64_t accepted_tokens() const { return at(Stage::accepted).tokens; }
  bool complete() const { return at(Stage::accepted).complete; }

  nlohmann::json to_json() const;
  static StageReport from_json(const nlohmann::json& j);

  friend bool operator==(const StageReport&, const StageReport&) = default;
};

/// A document that survived every stage run so far.
struct CandidateDoc {
  std::size_t line_no = 0;
  std::string normalized;
  Digest128 digest;
  Signature signature;
  std::int64_t tokens = 0;
};

/// Result of the index-independent stages (normalize, filter, in-submission dedup).
struct PreparedSubmission {
  StageReport report;
  std::vector<CandidateDoc> survivors;
};

struct PipelineResult {
  StageReport report;
  std::vector<CandidateDoc> accepted;
};

struct PipelineOptions {
  FilterRuleSet rules;
  MinHashParams minhash;
  LshParams lsh;
};

/// Runs received -> normalized -> filtered -> exact_dedup -> near_dedup.
/// Pure; safe to run concurrently for different submissions.
/// Throws Error(validation, "no_parseable_records") if nothing parses.
PreparedSubmission prepare_submission(const std::string& submission_id, std::string_view jsonl,
                                      const PipelineOptions& options,
                                      const Tokenizer& tokenizer = default_tokenizer());

/// Cross-corpus stage against the shared index, then the accepted stage.
/// Reads the index only.
PipelineResult finalize_submission(PreparedSubmission prepared, const DedupIndex& index);

/// Inserts accepted documents under `owner`. Callers hold the index's writer
/// lock so the batch lands atomically with the report.
void commit_accepted(const PipelineResult& result, DedupIndex& index, const std::string& owner,
                     Timestamp accepted_at);

/// prepare + finalize + commit in one call.
PipelineResult run_pipeline(const std::string& submission_id, std::string_view jsonl,
                            const FilterRuleSet& rules, DedupIndex& index,
                            const std::string& owner, Timestamp accepted_at,
                            const Tokenizer& tokenizer = default_tokenizer());

}  // namespace datapool
