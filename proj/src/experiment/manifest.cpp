#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "instanton/experiment.hpp"

namespace instanton::experiment {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

}  // namespace

RunManifest::RunManifest(std::filesystem::path directory, std::string command, const json& config,
                         std::uint64_t seed)
    : dir_(std::move(directory)) {
  std::filesystem::create_directories(dir_);
  doc_ = json{{"format", "instanton-run-manifest"},
              {"version", 1},
              {"command", std::move(command)},
              {"config", config},
              {"config_hash", content_hash(config)},
              {"seed", seed},
              {"status", "running"},
              {"started", utc_now()},
              {"stages", json::array()},
              {"artifacts", json::array()}};
  write();
}

RunManifest::~RunManifest() {
  if (!finished_) {
    try {
      finish("failed", "run ended without finishing");
    } catch (...) {
    }
  }
}

void RunManifest::begin_stage(const std::string& name) {
  doc_["stages"].push_back(json{{"name", name}, {"status", "running"}});
  write();
}

void RunManifest::end_stage(const std::string& status) {
  if (doc_["stages"].empty()) throw UsageError("no stage is running");
  doc_["stages"].back()["status"] = status;
  write();
}

void RunManifest::add_artifact(const std::filesystem::path& file) {
  const std::string name = file.generic_string();
  for (const auto& a : doc_["artifacts"]) {
    if (a == name) return;
  }
  doc_["artifacts"].push_back(name);
  write();
}

void RunManifest::finish(const std::string& status, const std::string& error) {
  for (auto& s : doc_["stages"]) {
    if (s["status"] == "running") s["status"] = status == "succeeded" ? "succeeded" : "failed";
  }
  doc_["status"] = status;
  if (!error.empty()) doc_["error"] = error;
  doc_["finished"] = utc_now();
  finished_ = true;
  write();
}

void RunManifest::write() const {
  const auto tmp = dir_ / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    out << doc_.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, file());
}

void write_history_csv(std::ostream& out, const std::vector<TrainRecord>& history) {
  out << "iteration,loss_phi,loss_g,total,seconds\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.6f\n", static_cast<long long>(r.iteration), r.loss_phi,
                  r.loss_g, r.total, r.seconds);
    out << buf;
  }
}

std::vector<TrainRecord> read_history_csv(std::istream& in) {
  std::string line;
  int number = 1;
  if (!std::getline(in, line) || line != "iteration,loss_phi,loss_g,total,seconds") {
    throw ParseError("expected header iteration,loss_phi,loss_g,total,seconds", 1);
  }
  std::vector<TrainRecord> out;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    TrainRecord r;
    long long it = 0;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf%c", &it, &r.loss_phi, &r.loss_g, &r.total, &r.seconds,
                    &tail) != 5) {
      throw ParseError("expected 5 numeric fields", number);
    }
    r.iteration = it;
    out.push_back(r);
  }
  return out;
}

}  // namespace instanton::experiment
