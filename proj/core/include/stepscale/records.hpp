#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stepscale/harness.hpp"

namespace stepscale {

inline constexpr const char* kTrialSchema = "stepscale.trial/1";
inline constexpr const char* kSummarySchema = "stepscale.summary/1";

void to_json(nlohmann::json& j, const TrialRecord& r);
void from_json(const nlohmann::json& j, TrialRecord& r);

/// Append-only JSON-lines file of trial records. Each record is written as a
/// single line and flushed before append() returns.
class RecordSink {
 public:
  explicit RecordSink(const std::filesystem::path& path);
  ~RecordSink();
  RecordSink(const RecordSink&) = delete;
  RecordSink& operator=(const RecordSink&) = delete;

  void append(const TrialRecord& record);

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

/// Reads every well-formed record line; a torn final line from an interrupted
/// append is ignored. Missing file -> empty. Duplicate keys keep the first.
std::vector<TrialRecord> load_records(const std::filesystem::path& path);

/// Columns: B, s, K_star, eta_star, momentum_star, n_complete, n_incomplete,
/// n_infeasible, best_key. Absent values are empty fields.
void write_summary_csv(const std::filesystem::path& path, const StudyTable& table);
StudyTable read_summary_csv(const std::filesystem::path& path);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Reads comma-separated rows, skipping '#' comment lines; the first
/// remaining row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace stepscale
