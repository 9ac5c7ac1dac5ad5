#include "stepscale/records.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stepscale/errors.hpp"

namespace stepscale {

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_or(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<double>();
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const TrialRecord& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : r.history) history.push_back({e.step, e.error});
  j = nlohmann::json{
      {"schema", kTrialSchema},
      {"key", r.key},
      {"workload", r.workload},
      {"batch_size", r.batch_size},
      {"sparsity", r.sparsity},
      {"trial_index", r.trial_index},
      {"seed", r.seed},
      {"metaparams", r.metaparams},
      {"status", to_string(r.status)},
      {"steps_to_goal", r.steps_to_goal ? nlohmann::json(*r.steps_to_goal) : nlohmann::json(nullptr)},
      {"history", std::move(history)},
      {"initial_loss", finite_or_null(r.initial_loss)},
      {"final_loss", finite_or_null(r.final_loss)},
      {"steps_run", r.steps_run},
      {"kept_parameters", r.kept_parameters},
  };
}

void from_json(const nlohmann::json& j, TrialRecord& r) {
  if (j.value("schema", std::string()) != kTrialSchema) throw ConfigError("unknown trial record schema");
  r.key = j.at("key").get<std::string>();
  r.workload = j.at("workload").get<std::string>();
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.sparsity = j.at("sparsity").get<double>();
  r.trial_index = j.at("trial_index").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.metaparams = j.at("metaparams").get<Metaparams>();
  r.status = parse_trial_status(j.at("status").get<std::string>());
  r.steps_to_goal.reset();
  if (!j.at("steps_to_goal").is_null()) r.steps_to_goal = j.at("steps_to_goal").get<std::int64_t>();
  r.history.clear();
  for (const auto& e : j.at("history")) r.history.push_back({e.at(0).get<std::int64_t>(), e.at(1).get<double>()});
  const double inf = std::numeric_limits<double>::infinity();
  r.initial_loss = number_or(j, "initial_loss", inf);
  r.final_loss = number_or(j, "final_loss", inf);
  r.steps_run = j.value("steps_run", std::int64_t{0});
  r.kept_parameters = j.value("kept_parameters", std::size_t{0});
}

RecordSink::RecordSink(const std::filesystem::path& path) : path_(path) {
  bool torn = false;
  if (std::FILE* in = std::fopen(path.string().c_str(), "rb")) {
    if (std::fseek(in, -1, SEEK_END) == 0) torn = std::fgetc(in) != '\n';
    std::fclose(in);
  }
  file_ = std::fopen(path.string().c_str(), "ab");
  if (!file_) throw IoError("cannot open record file " + path.string() + " for appending");
  if (torn && (std::fputc('\n', file_) == EOF || std::fflush(file_) != 0)) {
    throw IoError("failed to repair record file " + path.string());
  }
}

RecordSink::~RecordSink() {
  if (file_) std::fclose(file_);
}

void RecordSink::append(const TrialRecord& record) {
  const std::string line = nlohmann::json(record).dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw IoError("failed to append trial " + record.key + " to " + path_.string());
  }
}

std::vector<TrialRecord> load_records(const std::filesystem::path& path) {
  std::vector<TrialRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) continue;
    TrialRecord r;
    try {
      r = j.get<TrialRecord>();
    } catch (const std::exception&) {
      continue;
    }
    if (seen.insert(r.key).second) out.push_back(std::move(r));
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_summary_csv(const std::filesystem::path& path, const StudyTable& table) {
  std::ostringstream os;
  os << "# " << kSummarySchema << "\n";
  os << "B,s,K_star,eta_star,momentum_star,n_complete,n_incomplete,n_infeasible,best_key\n";
  for (const auto& r : table.rows) {
    os << r.batch_size << ',' << fmt_double(r.sparsity) << ',';
    if (r.k_star) os << *r.k_star;
    os << ',';
    if (r.eta_star) os << fmt_double(*r.eta_star);
    os << ',';
    if (r.momentum_star) os << fmt_double(*r.momentum_star);
    os << ',' << r.n_complete << ',' << r.n_incomplete << ',' << r.n_infeasible << ',' << r.best_key << '\n';
  }
  write_file_atomic(path, os.str());
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ConfigError("CSV column '" + name + "' not found");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      cells.resize(t.header.size());
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw ConfigError(path.string() + " has no header row");
  return t;
}

StudyTable read_summary_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const auto cb = csv.column("B"), cs = csv.column("s"), ck = csv.column("K_star"), ce = csv.column("eta_star"),
             cm = csv.column("momentum_star"), cc = csv.column("n_complete"), ci = csv.column("n_incomplete"),
             cf = csv.column("n_infeasible"), key = csv.column("best_key");
  StudyTable table;
  for (const auto& row : csv.rows) {
    StudyRow r;
    r.batch_size = std::stoull(row[cb]);
    r.sparsity = std::stod(row[cs]);
    if (!row[ck].empty()) r.k_star = std::stoll(row[ck]);
    if (!row[ce].empty()) r.eta_star = std::stod(row[ce]);
    if (!row[cm].empty()) r.momentum_star = std::stod(row[cm]);
    r.n_complete = std::stoull(row[cc]);
    r.n_incomplete = std::stoull(row[ci]);
    r.n_infeasible = std::stoull(row[cf]);
    r.best_key = row[key];
    table.rows.push_back(std::move(r));
  }
  return table;
}

}  // namespace stepscale
