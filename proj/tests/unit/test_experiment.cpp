#include "doctest.h"

#include <fstream>
#include <numbers>
#include <set>
#include <unistd.h>
#include <regex>
#include <sstream>

#include "instanton/autodiff/checkpoint.hpp"
#include "instanton/experiment.hpp"

using namespace instanton;
using namespace instanton::experiment;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("instanton_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

json gaussian_doc() {
  return json::parse(R"({
    "name": "tiny_gauss",
    "runtime_class": "seconds",
    "seed": 3,
    "problem": {
      "drift": "maier_stein", "drift_params": {"beta": 1}, "noise": "gaussian",
      "x1": [-1, 0], "x2": [1, 0], "T": 2, "N_T": 20, "tau": 1, "tau1": 10, "tau2": 10
    },
    "solver": {"phi_layers": [1, 6, 2], "g_layers": [1, 6, 2], "iterations": 200, "checkpoint_every": 100},
    "oracle": {"N": 10, "iterations": 2000}
  })");
}

json levy_doc() {
  return json::parse(R"({
    "name": "tiny_levy",
    "runtime_class": "seconds",
    "problem": {
      "drift": "maier_stein", "drift_params": {"beta": 10}, "noise": "levy", "gamma": 1.5,
      "R": 2, "delta": 0.5, "x1": [-1, 0], "x2": [1, 0], "T": 1, "N_T": 5,
      "tau": 0.1, "tau1": 100, "tau2": 10
    },
    "solver": {"phi_layers": [1, 4, 2], "g_layers": [3, 4, 1], "iterations": 20},
    "oracle": {"N": 8, "iterations": 300}
  })");
}

GlobalOptions options_for(const fs::path& config, const fs::path& out) {
  GlobalOptions g;
  g.config = config;
  g.out = out;
  return g;
}

int guarded(const std::function<int()>& body, std::string* message = nullptr) {
  std::ostringstream err;
  const int rc = run_guarded(body, err);
  if (message) *message = err.str();
  return rc;
}

}  // namespace

TEST_CASE("config: a missing tau2 is rejected by name with exit code 2") {
  TempDir dir("tau2");
  json doc = gaussian_doc();
  doc["problem"].erase("tau2");
  spit(dir.path / "c.cfg", doc.dump());
  CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("tau2"), ConfigError);
  std::ostringstream log;
  std::string message;
  const int rc = guarded([&] { return cmd_validate_config(options_for(dir.path / "c.cfg", dir.path), log); }, &message);
  CHECK(rc == 2);
  CHECK(message.find("problem.tau2") != std::string::npos);
}

TEST_CASE("config: field-level validation") {
  auto rejects = [](json doc, const char* field) {
    CAPTURE(field);
    CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains(field), ConfigError);
  };
  json d = gaussian_doc();
  d["problem"]["colour"] = "blue";
  rejects(d, "problem.colour");
  d = gaussian_doc();
  d["problem"]["T_list"] = {1, 2};
  rejects(d, "T");
  d = gaussian_doc();
  d["problem"].erase("T");
  d["problem"]["T_list"] = {5, 2};
  rejects(d, "T_list");
  d = gaussian_doc();
  d["problem"]["gamma"] = 1.5;
  rejects(d, "problem.gamma");
  d = gaussian_doc();
  d["runtime_class"] = "days";
  rejects(d, "runtime_class");
  d = gaussian_doc();
  d["problem"]["noise"] = "pink";
  rejects(d, "noise");
  d = levy_doc();
  d["problem"]["gamma"] = 0.5;
  rejects(d, "gamma");
  d = levy_doc();
  d["problem"]["sigma"] = {{1, 0}, {0, 1}};
  rejects(d, "problem.sigma");
  d = gaussian_doc();
  d["simulate"] = {{"epsilon", 0.1}, {"dt", 0.01}, {"T", 1}, {"trials", 0}};
  rejects(d, "simulate.trials");
  d = gaussian_doc();
  d["problem"]["drift"] = "lorenz";
  CHECK_THROWS_WITH(parse_config(d), doctest::Contains("maier_stein"));
}

TEST_CASE("config: T lists and paper-scale overrides") {
  json d = gaussian_doc();
  d["problem"].erase("T");
  d["problem"]["T_list"] = {1, 5, 20};
  ExperimentConfig c = parse_config(d);
  CHECK(c.horizons == std::vector<double>{1, 5, 20});
  CHECK(c.problem_at(5).horizon == 5);

  CHECK_THROWS_AS(parse_config(gaussian_doc(), true), ConfigError);
  d = gaussian_doc();
  d["paper_scale"] = {{"problem", {{"N_T", 40}}}, {"solver", {{"iterations", 7}}}};
  c = parse_config(d, true);
  CHECK(c.problem.residual_count == 40);
  CHECK(c.solver.iterations == 7);
  CHECK(c.problem.tau2 == 10);
  CHECK(parse_config(d).problem.residual_count == 20);
  CHECK(merge(json{{"a", {{"b", 1}, {"c", 2}}}}, json{{"a", {{"c", 3}}}}) == json{{"a", {{"b", 1}, {"c", 3}}}});
}

TEST_CASE("config: content hash is the git blob hash of the canonical dump") {
  // printf '{"a":1}' | git hash-object --stdin
  CHECK(content_hash(json{{"a", 1}}) == "daa5053ecf5f9a37b2de733d0751cc1ab53ac010");
  CHECK(content_hash(gaussian_doc()) == content_hash(json::parse(gaussian_doc().dump(4))));
  json other = gaussian_doc();
  other["seed"] = 4;
  CHECK(content_hash(other) != content_hash(gaussian_doc()));
}

TEST_CASE("bundled configs validate at both scales") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(INSTANTON_CONFIG_DIR)) {
    if (entry.path().extension() != ".cfg") continue;
    ++count;
    CAPTURE(entry.path().string());
    const ExperimentConfig c = load_config(entry.path());
    CHECK((c.runtime_class == "seconds" || c.runtime_class == "minutes" || c.runtime_class == "hours"));
    std::ifstream in(entry.path());
    if (json::parse(in).contains("paper_scale")) CHECK_NOTHROW(load_config(entry.path(), true));
  }
  CHECK(count >= 5);
}

TEST_CASE("history CSV round trip and line-numbered parse errors") {
  std::vector<TrainRecord> h{{0, 1.5, 0.25, 1.75, 0.001}, {100, 1e-7, 3.0e-3, 3.1e-3, 2.5}};
  std::stringstream s;
  write_history_csv(s, h);
  CHECK(s.str().rfind("iteration,loss_phi,loss_g,total,seconds\n", 0) == 0);
  const auto back = read_history_csv(s);
  REQUIRE(back.size() == 2);
  CHECK(back[1].iteration == 100);
  CHECK(back[1].loss_phi == 1e-7);
  CHECK(back[1].total == 3.1e-3);
  std::istringstream bad("iteration,loss_phi,loss_g,total,seconds\n0,1,2,3,4\n1,2,x,4,5\n");
  try {
    read_history_csv(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("run manifest lists artifacts and records failure") {
  TempDir dir("manifest");
  {
    RunManifest m(dir.path, "unit", json{{"x", 1}}, 9);
    CHECK(fs::exists(m.file()));
    m.begin_stage("one");
    m.add_artifact("a.csv");
    m.add_artifact("a.csv");
    m.end_stage();
    m.finish("succeeded");
    const json doc = json::parse(slurp(m.file()));
    CHECK(doc["status"] == "succeeded");
    CHECK(doc["artifacts"] == json::array({"a.csv"}));
    CHECK(doc["config_hash"] == content_hash(json{{"x", 1}}));
    CHECK(doc["seed"] == 9);
    CHECK(doc["stages"][0]["status"] == "succeeded");
  }
  {
    RunManifest m(dir.path, "unit", json::object(), 0);
    m.begin_stage("interrupted");
  }
  const json doc = json::parse(slurp(dir.path / "manifest.json"));
  CHECK(doc["status"] == "failed");
  CHECK(doc["stages"][0]["status"] == "failed");
}

TEST_CASE("train writes the listed artifacts and reruns are byte-stable") {
  TempDir dir("train");
  spit(dir.path / "c.cfg", gaussian_doc().dump());
  std::ostringstream log;
  REQUIRE(cmd_train(options_for(dir.path / "c.cfg", dir.path / "a"), log) == 0);
  REQUIRE(cmd_train(options_for(dir.path / "c.cfg", dir.path / "b"), log) == 0);

  const json manifest = json::parse(slurp(dir.path / "a" / "manifest.json"));
  CHECK(manifest["status"] == "succeeded");
  std::set<std::string> listed;
  for (const auto& a : manifest["artifacts"]) listed.insert(a.get<std::string>());
  std::set<std::string> present;
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") {
      present.insert(fs::relative(e.path(), dir.path / "a").generic_string());
    }
  }
  CHECK(listed == present);
  CHECK(listed.count("path.csv") == 1);
  CHECK(listed.count("history.csv") == 1);
  CHECK(listed.count("checkpoint.json") == 1);
  CHECK(listed.count("rate.json") == 1);

  CHECK(slurp(dir.path / "a" / "path.csv") == slurp(dir.path / "b" / "path.csv"));
  CHECK(slurp(dir.path / "a" / "checkpoint.json") == slurp(dir.path / "b" / "checkpoint.json"));
  std::ifstream ha(dir.path / "a" / "history.csv"), hb(dir.path / "b" / "history.csv");
  const auto ra = read_history_csv(ha), rb = read_history_csv(hb);
  REQUIRE(ra.size() == rb.size());
  CHECK(ra.size() == 3);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].iteration == rb[i].iteration);
    CHECK(ra[i].loss_phi == rb[i].loss_phi);
    CHECK(ra[i].loss_g == rb[i].loss_g);
    CHECK(ra[i].total == rb[i].total);
  }
  CHECK(manifest["config_hash"] == json::parse(slurp(dir.path / "b" / "manifest.json"))["config_hash"]);

  const Path p = read_path_csv(dir.path / "a" / "path.csv");
  CHECK(p.times.size() == 20);
  CHECK(slurp(dir.path / "a" / "path.csv").rfind("t,x1,x2\n", 0) == 0);

  json longer = gaussian_doc();
  longer["solver"]["iterations"] = 400;
  spit(dir.path / "longer.cfg", longer.dump());
  CHECK(cmd_train(options_for(dir.path / "longer.cfg", dir.path / "a"), log, dir.path / "a" / "checkpoint.json") == 0);
  std::ifstream resumed(dir.path / "a" / "history.csv");
  const auto tail = read_history_csv(resumed);
  REQUIRE(tail.size() == 3);
  CHECK(tail.front().iteration == 200);
  CHECK(tail.back().iteration == 400);
}

TEST_CASE("train over a T list writes per-horizon directories and a rate table") {
  TempDir dir("sweep");
  json d = gaussian_doc();
  d["problem"].erase("T");
  d["problem"]["T_list"] = {1, 2};
  d["solver"]["iterations"] = 100;
  spit(dir.path / "c.cfg", d.dump());
  std::ostringstream log;
  REQUIRE(cmd_train(options_for(dir.path / "c.cfg", dir.path / "run"), log) == 0);
  CHECK(fs::exists(dir.path / "run" / "T_1" / "path.csv"));
  CHECK(fs::exists(dir.path / "run" / "T_2" / "rate.json"));
  std::istringstream table(slurp(dir.path / "run" / "rate_vs_T.csv"));
  std::string line;
  int rows = 0;
  std::getline(table, line);
  CHECK(line == "T,rate");
  while (std::getline(table, line)) rows += !line.empty();
  CHECK(rows == 2);
  CHECK(fs::exists(dir.path / "run" / "rate_vs_T.svg"));
}

TEST_CASE("oracle: Levy action JSON carries N-1 theta vectors") {
  TempDir dir("oracle");
  spit(dir.path / "c.cfg", levy_doc().dump());
  std::ostringstream log;
  REQUIRE(cmd_oracle(options_for(dir.path / "c.cfg", dir.path / "run"), log) == 0);
  const json action = json::parse(slurp(dir.path / "run" / "action.json"));
  CHECK(action["theta"].size() == 7);
  CHECK(action["theta"][0].size() == 2);
  CHECK(action["action"].get<double>() > 0);
  CHECK(read_path_csv(dir.path / "run" / "oracle_path.csv").times.size() == 8);
}

TEST_CASE("compare: identical, reversed and malformed inputs") {
  TempDir dir("compare");
  Path p;
  p.times = Vector::LinSpaced(5, 0, 1);
  p.states = Matrix(2, 5);
  p.states << -1, -0.5, 0, 0.5, 1, 0, 0.2, 0.3, 0.2, 0;
  write_path_csv(dir.path / "a.csv", p);
  write_path_csv(dir.path / "r.csv", p.reversed());
  std::ostringstream log;
  GlobalOptions g;
  CHECK(cmd_compare(g, dir.path / "a.csv", dir.path / "a.csv", log) == 0);
  CHECK(json::parse(log.str())["hausdorff"] == 0.0);
  log.str("");
  CHECK(cmd_compare(g, dir.path / "a.csv", dir.path / "r.csv", log) == 0);
  CHECK(json::parse(log.str())["hausdorff"] == 0.0);

  spit(dir.path / "bad.csv", "t,x1,x2\n0,1,2\n0.5,oops,1\n");
  std::string message;
  CHECK(guarded([&] { return cmd_compare(g, dir.path / "a.csv", dir.path / "bad.csv", log); }, &message) == 2);
  CHECK(message.find("line 3") != std::string::npos);

  g.out = dir.path / "out";
  CHECK(cmd_compare(g, dir.path / "a.csv", dir.path / "r.csv", log) == 0);
  CHECK(json::parse(slurp(dir.path / "out" / "manifest.json"))["artifacts"] == json::array({"compare.json"}));
}

TEST_CASE("simulate: zero noise gives the deterministic flow, zero trials is rejected") {
  TempDir dir("simulate");
  json d = gaussian_doc();
  d["simulate"] = {{"epsilon", 0.0}, {"dt", 0.05}, {"T", 1}, {"trials", 4}, {"dump_trajectories", true}};
  spit(dir.path / "c.cfg", d.dump());
  std::ostringstream log;
  REQUIRE(cmd_simulate(options_for(dir.path / "c.cfg", dir.path / "run"), log) == 0);
  std::istringstream traj(slurp(dir.path / "run" / "trajectories.csv"));
  std::string line;
  std::getline(traj, line);
  CHECK(line == "trial,t,x1,x2");
  std::map<std::string, std::set<std::string>> by_time;
  int rows = 0;
  while (std::getline(traj, line)) {
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    by_time[line.substr(first + 1, second - first - 1)].insert(line.substr(second + 1));
    ++rows;
  }
  CHECK(rows == 4 * 21);
  for (const auto& [t, states] : by_time) CHECK(states.size() == 1);
  CHECK(by_time["1"] == std::set<std::string>{"-1,0"});
  CHECK(slurp(dir.path / "run" / "batch.csv").rfind("trial,transition_flag,tube_flag,terminal_x,terminal_y\n", 0) == 0);

  d["simulate"]["trials"] = 0;
  spit(dir.path / "zero.cfg", d.dump());
  std::string message;
  CHECK(guarded([&] { return cmd_simulate(options_for(dir.path / "zero.cfg", dir.path / "z"), log); }, &message) == 2);
  CHECK(message.find("trials") != std::string::npos);
}

TEST_CASE("simulate: Levy MSD report fields") {
  TempDir dir("msd");
  json d = levy_doc();
  d["problem"]["gamma"] = 2;
  d["problem"]["R"] = 5;
  d["problem"]["delta"] = 0.05;
  d["simulate"] = {{"epsilon", 0.1}, {"dt", 0.01}, {"T", 1}, {"trials", 10}, {"msd_trials", 20000}};
  spit(dir.path / "c.cfg", d.dump());
  std::ostringstream log;
  REQUIRE(cmd_simulate(options_for(dir.path / "c.cfg", dir.path / "run"), log) == 0);
  const json msd = json::parse(slurp(dir.path / "run" / "msd.json"));
  for (const char* key : {"K", "estimate", "standard_error", "z_score", "expected"}) CHECK(msd.contains(key));
  CHECK(std::abs(msd["z_score"].get<double>()) < 4.0);
  CHECK(msd["K"].get<double>() == doctest::Approx(std::numbers::pi).epsilon(1e-9));
}

TEST_CASE("export-figure: path overlays") {
  TempDir dir("paths");
  Path p;
  p.times = Vector::LinSpaced(3, 0, 1);
  p.states = Matrix(2, 3);
  p.states << -1, 0, 1, 0, 0.3, 0;
  write_path_csv(dir.path / "one.csv", p);
  write_path_csv(dir.path / "two.csv", p.reversed());
  GlobalOptions g;
  g.out = dir.path / "fig";
  FigureOptions f;
  f.paths = {(dir.path / "one.csv").string() + "=network", (dir.path / "two.csv").string()};
  f.drift = "maier_stein";
  f.params = {"beta=10"};
  std::ostringstream log;
  REQUIRE(cmd_export_figure(g, f, log) == 0);
  const std::string svg = slurp(dir.path / "fig" / "paths.svg");
  std::size_t entries = 0;
  for (std::size_t at = svg.find("class=\"legend-entry\""); at != std::string::npos;
       at = svg.find("class=\"legend-entry\"", at + 1)) {
    ++entries;
  }
  CHECK(entries == 2);
  CHECK(svg.find(">network<") != std::string::npos);
  CHECK(svg.rfind("<svg", 0) == 0);

  std::string message;
  f.paths.clear();
  CHECK(guarded([&] { return cmd_export_figure(g, f, log); }, &message) == 2);
  f.paths = {(dir.path / "one.csv").string()};
  f.drift = "no_such_field";
  CHECK(guarded([&] { return cmd_export_figure(g, f, log); }, &message) == 2);
  CHECK(message.find("maier_stein") != std::string::npos);
}

TEST_CASE("export-figure: integrand heat map is capped at 101 x 101 cells") {
  TempDir dir("heat");
  json d = levy_doc();
  d["problem"]["R"] = 5;
  d["problem"]["delta"] = 0.05;
  d["problem"]["N_T"] = 3;
  d["solver"]["iterations"] = 2;
  spit(dir.path / "c.cfg", d.dump());
  std::ostringstream log;
  REQUIRE(cmd_train(options_for(dir.path / "c.cfg", dir.path / "run"), log) == 0);

  GlobalOptions g = options_for(dir.path / "c.cfg", dir.path / "fig");
  FigureOptions f;
  f.kind = "heatmap";
  f.checkpoint = dir.path / "run" / "checkpoint.json";
  REQUIRE(cmd_export_figure(g, f, log) == 0);
  const std::string svg = slurp(dir.path / "fig" / "heatmap.svg");

  const std::regex cells_re("data-cells=\"(\\d+)x(\\d+)\"");
  std::smatch m;
  REQUIRE(std::regex_search(svg, m, cells_re));
  const int rows = std::stoi(m[1]), cols = std::stoi(m[2]);
  CHECK(rows <= 101);
  CHECK(cols <= 101);
  CHECK(rows == 101);
  std::size_t rects = 0;
  const auto cells_at = svg.find("class=\"cells\"");
  for (std::size_t at = svg.find("<rect", cells_at); at != std::string::npos; at = svg.find("<rect", at + 1)) ++rects;
  CHECK(rects == static_cast<std::size_t>(rows * cols));

  const TrainResult state = from_checkpoint(ad::load_checkpoint(f.checkpoint));
  const ExperimentConfig c = load_config(dir.path / "c.cfg");
  const RateReport rep = evaluate_rate(state.phi, state.g, c.problem);
  Eigen::Index peak = 0;
  rep.profile.maxCoeff(&peak);
  const double top = running_cost_density(state.g, c.problem.grid(), rep.times(peak), 1.0).maxCoeff();
  char expected[64];
  std::snprintf(expected, sizeof expected, "max cell value %.6e", top);
  const std::regex title_re("<svg[^>]* title=\"([^\"]*)\"");
  REQUIRE(std::regex_search(svg, m, title_re));
  CHECK(std::string(m[1]).find(expected) != std::string::npos);
}

TEST_CASE("run_guarded maps error families to exit codes") {
  std::ostringstream err;
  CHECK(run_guarded([] { return 0; }, err) == 0);
  CHECK(run_guarded([]() -> int { throw ConfigError("x", "bad"); }, err) == 2);
  CHECK(run_guarded([]() -> int { throw ParseError("bad", 4); }, err) == 2);
  CHECK(run_guarded([]() -> int { throw NumericalError("nan"); }, err) == 3);
  CHECK(run_guarded([]() -> int { throw AdmissibilityError("g <= 0"); }, err) == 3);
  CHECK(run_guarded([]() -> int { throw std::runtime_error("other"); }, err) == 1);
}
