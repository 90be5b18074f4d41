#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "eeprecode/channel_io.hpp"
#include "eeprecode/experiment.hpp"

using namespace eeprecode;
namespace fs = std::filesystem;

namespace {

using Row = std::vector<std::string>;

std::vector<Row> parse_csv(const std::string& text) {
  std::vector<Row> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    Row row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) row.push_back(field);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    rows.push_back(row);
  }
  return rows;
}

std::string join(const Row& row) {
  std::string s;
  for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + row[i];
  return s;
}

struct Output {
  int code = 0;
  std::string out;
  std::string log;
};

Output run(const std::string& command, const ExperimentConfig& config) {
  std::ostringstream out, log;
  const int code = run_command(command, config, out, log);
  return {code, out.str(), log.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "eeprecode_test_experiment";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.users = config.feeds = 3;
  config.seed = 5;
  return config;
}

}  // namespace

TEST_CASE("enum parsing") {
  CHECK(parse_algorithm("zf") == Algorithm::kZf);
  CHECK(parse_algorithm("sca") == Algorithm::kSca);
  CHECK(parse_algorithm("both") == Algorithm::kBoth);
  CHECK(std::string(to_string(Algorithm::kSca)) == "sca");
  CHECK(parse_format("json") == OutputFormat::kJson);
  CHECK(parse_format("csv") == OutputFormat::kCsv);
  CHECK_THROWS_AS(parse_algorithm("mmse"), InvalidInput);
  CHECK_THROWS_AS(parse_format("xml"), InvalidInput);
}

TEST_CASE("config validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  c.pt_dbw.clear();
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.qos_db_min = 3.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.sigma2 = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.xi = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  CHECK(run("optimize", c).code == kExitIoOrConfig);
}

TEST_CASE("QoS thresholds are reproducible and inside the dB range") {
  ExperimentConfig c;
  const VectorXd a = draw_qos(c, 7);
  CHECK(a == draw_qos(c, 7));
  for (Index k = 0; k < 7; ++k) {
    CHECK(linear_to_db(a(k)) >= c.qos_db_min - 1e-12);
    CHECK(linear_to_db(a(k)) <= c.qos_db_max + 1e-12);
  }
  c.seed = 2;
  CHECK(a != draw_qos(c, 7));
  c.qos_db_min = c.qos_db_max = 3.0;
  CHECK(draw_qos(c, 2)(1) == doctest::Approx(db_to_linear(3.0)));
}

TEST_CASE("gen-channel") {
  ExperimentConfig c;
  const auto path = scratch("gen.csv");
  c.out = path.string();
  const auto first = run("gen-channel", c);
  REQUIRE(first.code == kExitOk);
  CHECK(first.log.find("K=7 N=7") != std::string::npos);
  const auto ch = load_channel(path);
  CHECK(ch.users() == 7);
  CHECK(ch.feeds() == 7);
  const std::string bytes = slurp(path);
  REQUIRE(run("gen-channel", c).code == kExitOk);
  CHECK(slurp(path) == bytes);

  c.out.reset();
  CHECK(run("gen-channel", c).out == bytes);
  c.format = OutputFormat::kJson;
  const auto from_json = channel_from_json(run("gen-channel", c).out);
  CHECK(from_json.gains == ch.gains);
  CHECK(from_json.phases == ch.phases);

  c.users = 8;
  const auto wide = run("gen-channel", c);
  CHECK(wide.code == kExitIoOrConfig);
  CHECK(wide.log.find("K <= N") != std::string::npos);
}

TEST_CASE("optimize CSV tables and precoder round trip") {
  ExperimentConfig c = small_config();
  const auto r = run("optimize", c);
  REQUIRE(r.code == kExitOk);
  const auto blank = r.out.find("\n\n");
  REQUIRE(blank != std::string::npos);
  const auto table = parse_csv(r.out.substr(0, blank + 1));
  REQUIRE(table.size() == 1 + 2 * 3);
  CHECK(join(table[0]) == kOptimizeColumns);
  for (std::size_t i = 1; i < table.size(); ++i) CHECK(table[i].size() == table[0].size());

  std::istringstream w_text(r.out.substr(blank + 2));
  const auto precoders = read_precoders_csv(w_text, 3, 3);
  REQUIRE(precoders.size() == 2);

  const auto ch = make_channel(c);
  const auto params = system_params(c, 14.0, 18.75, draw_qos(c, 3));
  std::map<std::string, double> ee;
  for (const auto& [name, W] : precoders) {
    const double recomputed = energy_efficiency(ch.H, W, params);
    for (std::size_t i = 1; i < table.size(); ++i)
      if (table[i][0] == name) {
        const double emitted = std::stod(table[i][6]);
        CHECK(std::abs(emitted - recomputed) <= 1e-9 * recomputed);
        CHECK(std::stod(table[i][7]) == doctest::Approx(emitted / std::log(2.0)));
        ee[name] = emitted;
      }
  }
  // per unit bandwidth
  CHECK((ee["sca"] - ee["zf"]) / c.bandwidth_hz >= -1e-6);
}

TEST_CASE("optimize writes a precoder companion file") {
  ExperimentConfig c = small_config();
  c.algorithm = Algorithm::kZf;
  const auto path = scratch("opt.csv");
  c.out = path.string();
  REQUIRE(run("optimize", c).code == kExitOk);
  CHECK(precoder_path(path.string()) == scratch("opt.precoder.csv").string());
  CHECK(precoder_path("run") == "run.precoder.csv");
  std::ifstream w_file(precoder_path(path.string()));
  const auto precoders = read_precoders_csv(w_file, 3, 3);
  REQUIRE(precoders.size() == 1);
  CHECK(precoders[0].first == "zf");
  CHECK(parse_csv(slurp(path)).size() == 4);
}

TEST_CASE("optimize JSON echoes the config and recomputes from W") {
  ExperimentConfig c = small_config();
  c.format = OutputFormat::kJson;
  const auto r = run("optimize", c);
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["version"] == kVersion);
  CHECK(j["command"] == "optimize");
  CHECK(j["config"]["seed"] == 5);
  CHECK(j["config"]["p0_dbw"][0] == 18.75);
  CHECK(j["config"].contains("geometry"));
  const auto ch = make_channel(c);
  const auto params = system_params(c, 14.0, 18.75, draw_qos(c, 3));
  REQUIRE(j["results"].size() == 2);
  for (const auto& res : j["results"]) {
    MatrixXcd W(3, 3);
    for (Index n = 0; n < 3; ++n)
      for (Index k = 0; k < 3; ++k)
        W(n, k) = {res["W_re"][n][k].get<double>(), res["W_im"][n][k].get<double>()};
    const double ee = res["energy_efficiency_nats"];
    CHECK(std::abs(ee - energy_efficiency(ch.H, W, params)) <= 1e-9 * ee);
    CHECK(res["trace"].size() == res["iterations"].get<std::size_t>());
  }
}

TEST_CASE("infeasible QoS is reported with the violating users") {
  ExperimentConfig c = small_config();
  c.qos_db_min = c.qos_db_max = 30.0;
  c.pt_dbw = {-20.0};
  const auto r = run("optimize", c);
  CHECK(r.code == kExitInfeasible);
  CHECK(r.log.find("violating users") != std::string::npos);
}

TEST_CASE("missing channel file is an I/O error") {
  ExperimentConfig c;
  c.channel_path = scratch("absent.csv").string();
  CHECK(run("optimize", c).code == kExitIoOrConfig);
  CHECK(run("frobnicate", ExperimentConfig{}).code == kExitIoOrConfig);
}

TEST_CASE("shipped channel file drives optimize") {
  ExperimentConfig c;
  c.channel_path = (fs::path(EEPRECODE_DATA_DIR) / "channel_7x7.csv").string();
  c.algorithm = Algorithm::kZf;
  const auto r = run("optimize", c);
  REQUIRE(r.code == kExitOk);
  CHECK(parse_csv(r.out.substr(0, r.out.find("\n\n") + 1)).size() == 8);
}

TEST_CASE("convergence traces") {
  ExperimentConfig c = small_config();
  const auto r = run("convergence", c);
  REQUIRE(r.code == kExitOk);
  const auto rows = parse_csv(r.out);
  CHECK(join(rows[0]) == kConvergenceColumns);
  std::map<std::string, std::vector<double>> traces;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto& t = traces[rows[i][0]];
    CHECK(std::stoul(rows[i][1]) == t.size() + 1);
    t.push_back(std::stod(rows[i][2]));
  }
  REQUIRE(traces.size() == 2);
  for (std::size_t i = 1; i < traces["zf"].size(); ++i)
    CHECK(traces["zf"][i] >= traces["zf"][i - 1] - 1e-12);
  CHECK(traces["zf"].size() <= 50);
  CHECK(traces["sca"].size() <= 50);

  c.format = OutputFormat::kJson;
  const auto j = nlohmann::json::parse(run("convergence", c).out);
  for (const auto& t : j["traces"]) {
    CHECK(t["objective"].size() == t["iterations"].get<std::size_t>());
    CHECK(t["energy_efficiency"].size() == t["iterations"].get<std::size_t>());
  }
}

TEST_CASE("single-point sweep reproduces optimize") {
  ExperimentConfig c = small_config();
  const auto opt = parse_csv(run("optimize", c).out);
  const auto sweep = parse_csv(run("sweep", c).out);
  REQUIRE(sweep.size() == 3);
  CHECK(join(sweep[0]) == kSweepColumns);
  for (std::size_t i = 1; i < 3; ++i) {
    CHECK(sweep[i][3] == "ok");
    const std::string algorithm = sweep[i][2];
    for (std::size_t r = 1; r < opt.size() && !opt[r].empty(); ++r)
      if (opt[r][0] == algorithm) {
        CHECK(sweep[i][4] == opt[r][6]);  // EE
        CHECK(sweep[i][6] == opt[r][8]);  // power
        CHECK(sweep[i][7] == opt[r][9]);  // iterations
      }
  }
}

TEST_CASE("sweep keeps going past failed points") {
  ExperimentConfig c = small_config();
  c.qos_db_min = c.qos_db_max = 2.0;
  c.algorithm = Algorithm::kZf;
  c.pt_dbw = {-30.0, 14.0};
  c.p0_dbw = {18.75, 21.76};
  const auto r = run("sweep", c);
  REQUIRE(r.code == kExitOk);
  const auto rows = parse_csv(r.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[1][0] == "18.75");
  CHECK(rows[1][1] == "-30");
  CHECK(rows[1][3] == "infeasible");
  CHECK(rows[1][4].empty());
  CHECK(rows[2][3] == "ok");
  CHECK(std::stod(rows[3][0]) == 21.76);
  CHECK(std::stod(rows[4][4]) < std::stod(rows[2][4]));

  c.format = OutputFormat::kJson;
  const auto j = nlohmann::json::parse(run("sweep", c).out);
  CHECK(j["cells"][0]["energy_efficiency_nats"].is_null());
  CHECK(j["cells"][0]["status"] == "infeasible");
}
