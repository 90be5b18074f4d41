#include "eeprecode/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "eeprecode/channel_io.hpp"
#include "eeprecode/errors.hpp"

namespace eeprecode {

namespace {

using nlohmann::json;

constexpr std::uint64_t kQosStream = 0x9E3779B97F4A7C15ULL;

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double bits(double nats) { return nats / std::numbers::ln2; }

json config_json(const ExperimentConfig& c) {
  json j;
  j["channel"] = c.channel_path ? json(*c.channel_path) : json(nullptr);
  j["seed"] = c.seed;
  j["users"] = c.users;
  j["feeds"] = c.feeds;
  j["algorithm"] = to_string(c.algorithm);
  j["pt_dbw"] = c.pt_dbw;
  j["p0_dbw"] = c.p0_dbw;
  j["sigma2"] = c.sigma2;
  j["bandwidth_hz"] = c.bandwidth_hz;
  j["qos_db_min"] = c.qos_db_min;
  j["qos_db_max"] = c.qos_db_max;
  j["xi"] = c.xi;
  j["epsilon"] = c.epsilon;
  j["format"] = c.format == OutputFormat::kCsv ? "csv" : "json";
  const auto& g = c.geometry;
  j["geometry"] = {{"beam_spacing_deg", g.beam_spacing_deg},
                   {"beamwidth_3db_deg", g.beamwidth_3db_deg},
                   {"roll_off", g.roll_off},
                   {"peak_gain_dbi", g.peak_gain_dbi},
                   {"user_offset_fraction", g.user_offset_fraction},
                   {"receive_gain_dbi", g.receive_gain_dbi},
                   {"g_over_t_dbk", g.g_over_t_dbk},
                   {"carrier_hz", g.carrier_hz},
                   {"boltzmann", g.boltzmann},
                   {"slant_range_m", g.slant_range_m},
                   {"slant_range_spread_m", g.slant_range_spread_m}};
  return j;
}

json header_json(const std::string& command, const ExperimentConfig& config,
                 const ChannelMatrix& channel) {
  return {{"version", kVersion},
          {"command", command},
          {"config", config_json(config)},
          {"channel", {{"K", channel.users()}, {"N", channel.feeds()}}}};
}

json vector_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

VectorXd to_db(const VectorXd& linear) {
  return linear.unaryExpr([](double x) { return linear_to_db(x); });
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Writes to config.out when set, otherwise to `fallback`.
template <class Writer>
void emit(const ExperimentConfig& config, std::ostream& fallback, Writer&& writer) {
  if (!config.out) {
    writer(fallback);
    return;
  }
  std::ofstream file(*config.out, std::ios::binary);
  if (!file) throw IoError("cannot open '" + *config.out + "' for writing");
  writer(file);
  if (!file) throw IoError("write to '" + *config.out + "' failed");
}

struct Instance {
  ChannelMatrix channel;
  VectorXd qos;
};

Instance prepare(const ExperimentConfig& config) {
  config.validate();
  Instance inst{make_channel(config), {}};
  inst.qos = draw_qos(config, inst.channel.users());
  return inst;
}

std::vector<Algorithm> expand(Algorithm algorithm) {
  if (algorithm == Algorithm::kBoth) return {Algorithm::kZf, Algorithm::kSca};
  return {algorithm};
}

}  // namespace

const char* to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kZf: return "zf";
    case Algorithm::kSca: return "sca";
    case Algorithm::kBoth: return "both";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "zf") return Algorithm::kZf;
  if (name == "sca") return Algorithm::kSca;
  if (name == "both") return Algorithm::kBoth;
  throw InvalidInput("unknown algorithm '" + name + "' (expected zf, sca or both)");
}

OutputFormat parse_format(const std::string& name) {
  if (name == "csv") return OutputFormat::kCsv;
  if (name == "json") return OutputFormat::kJson;
  throw InvalidInput("unknown format '" + name + "' (expected csv or json)");
}

void ExperimentConfig::validate() const {
  if (pt_dbw.empty()) throw InvalidInput("the P_T grid is empty");
  if (p0_dbw.empty()) throw InvalidInput("no platform power given");
  for (double v : pt_dbw)
    if (!std::isfinite(v)) throw InvalidInput("P_T values must be finite");
  for (double v : p0_dbw)
    if (!std::isfinite(v)) throw InvalidInput("P_0 values must be finite");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidInput("sigma2 must be positive");
  if (!(bandwidth_hz > 0.0) || !std::isfinite(bandwidth_hz))
    throw InvalidInput("bandwidth must be positive");
  if (!std::isfinite(qos_db_min) || !std::isfinite(qos_db_max) || qos_db_min > qos_db_max)
    throw InvalidInput("QoS range must satisfy qos-db-min <= qos-db-max");
  if (!(xi > 0.0)) throw InvalidInput("xi must be positive");
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (!channel_path && (users < 1 || feeds < 1))
    throw InvalidInput("users and feeds must be at least 1");
}

ChannelMatrix make_channel(const ExperimentConfig& config) {
  if (config.channel_path) return load_channel(*config.channel_path);
  BeamGeometry geometry = config.geometry;
  geometry.bandwidth_hz = config.bandwidth_hz;
  return synth_channel(config.seed, config.users, config.feeds, geometry);
}

VectorXd draw_qos(const ExperimentConfig& config, Index users) {
  std::mt19937_64 rng(config.seed + kQosStream);
  std::uniform_real_distribution<double> db(config.qos_db_min, config.qos_db_max);
  VectorXd qos(users);
  for (Index k = 0; k < users; ++k)
    qos(k) = config.qos_db_min == config.qos_db_max ? db_to_linear(config.qos_db_min)
                                                    : db_to_linear(db(rng));
  return qos;
}

SystemParams system_params(const ExperimentConfig& config, double pt_dbw, double p0_dbw,
                           const VectorXd& qos) {
  SystemParams p;
  p.max_power = dbw_to_watts(pt_dbw);
  p.platform_power = dbw_to_watts(p0_dbw);
  p.noise_power = config.sigma2;
  p.bandwidth = config.bandwidth_hz;
  p.qos = qos;
  return p;
}

ZfConfig zf_config(const ExperimentConfig& config) {
  ZfConfig zf;
  zf.xi = config.xi;
  zf.epsilon = config.epsilon;
  return zf;
}

ScaConfig sca_config(const ExperimentConfig& config) {
  ScaConfig sca;
  sca.xi = config.xi;
  return sca;
}

std::vector<AlgorithmRun> run_algorithms(const ChannelMatrix& channel, const SystemParams& params,
                                         Algorithm algorithm, const ZfConfig& zf,
                                         const ScaConfig& sca) {
  std::vector<AlgorithmRun> runs;
  for (Algorithm a : expand(algorithm)) {
    const auto start = std::chrono::steady_clock::now();
    AlgorithmRun run{a, a == Algorithm::kZf ? zf_precode(channel, params, zf)
                                             : sca_precode(channel, params, sca),
                     0.0};
    run.wall_time_s = seconds_since(start);
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<SweepCell> run_sweep(const ChannelMatrix& channel, const ExperimentConfig& config,
                                 const VectorXd& qos, const ZfConfig& zf, const ScaConfig& sca) {
  std::vector<SweepCell> cells;
  for (double p0 : config.p0_dbw) {
    for (double pt : config.pt_dbw) {
      const SystemParams params = system_params(config, pt, p0, qos);
      for (Algorithm a : expand(config.algorithm)) {
        SweepCell cell{p0, pt, a, std::nullopt, "ok", ""};
        try {
          cell.solution = run_algorithms(channel, params, a, zf, sca).front().solution;
        } catch (const Infeasible& e) {
          cell.status = "infeasible";
          cell.message = e.what();
        } catch (const SolverFailure& e) {
          cell.status = "solver-failure";
          cell.message = e.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::string precoder_path(const std::string& out) {
  const auto dot = out.find_last_of('.');
  const auto slash = out.find_last_of("/\\");
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return out + ".precoder.csv";
  return out.substr(0, dot) + ".precoder.csv";
}

std::vector<std::pair<std::string, MatrixXcd>> read_precoders_csv(std::istream& in, Index feeds,
                                                                  Index users) {
  std::vector<std::pair<std::string, MatrixXcd>> out;
  std::string line;
  if (!std::getline(in, line) || line != kPrecoderColumns)
    throw InvalidInput("precoder table: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, n, k, re, im;
    if (!std::getline(row, name, ',') || !std::getline(row, n, ',') ||
        !std::getline(row, k, ',') || !std::getline(row, re, ',') || !std::getline(row, im))
      throw InvalidInput("precoder table: malformed row '" + line + "'");
    if (out.empty() || out.back().first != name)
      out.emplace_back(name, MatrixXcd::Zero(feeds, users));
    const Index ni = std::stol(n);
    const Index ki = std::stol(k);
    if (ni < 0 || ni >= feeds || ki < 0 || ki >= users)
      throw InvalidInput("precoder table: index out of range");
    out.back().second(ni, ki) = {std::stod(re), std::stod(im)};
  }
  return out;
}

void cmd_gen_channel(const ExperimentConfig& config, std::ostream& out, std::ostream& log) {
  config.validate();
  const ChannelMatrix channel = make_channel(config);
  const ChannelFormat format = config.out ? format_for_path(*config.out)
                               : config.format == OutputFormat::kJson ? ChannelFormat::kJson
                                                                       : ChannelFormat::kCsv;
  if (config.out) {
    save_channel(*config.out, channel, format);
  } else if (format == ChannelFormat::kJson) {
    out << channel_to_json(channel) << '\n';
  } else {
    write_channel_csv(out, channel);
  }
  const double range_db = 20.0 * std::log10(channel.gains.maxCoeff() / channel.gains.minCoeff());
  log << "K=" << channel.users() << " N=" << channel.feeds() << " gain range " << num(range_db)
      << " dB\n";
}

void cmd_optimize(const ExperimentConfig& config, std::ostream& out, std::ostream& log) {
  const Instance inst = prepare(config);
  const SystemParams params =
      system_params(config, config.pt_dbw.front(), config.p0_dbw.front(), inst.qos);
  const auto runs =
      run_algorithms(inst.channel, params, config.algorithm, zf_config(config), sca_config(config));

  if (config.format == OutputFormat::kJson) {
    json j = header_json("optimize", config, inst.channel);
    j["pt_w"] = params.max_power;
    j["p0_w"] = params.platform_power;
    j["qos_linear"] = vector_json(inst.qos);
    j["qos_db"] = vector_json(to_db(inst.qos));
    j["results"] = json::array();
    for (const auto& r : runs) {
      const auto& s = r.solution;
      j["results"].push_back({{"algorithm", to_string(r.algorithm)},
                              {"W_re", matrix_json(s.W.real())},
                              {"W_im", matrix_json(s.W.imag())},
                              {"sinr_linear", vector_json(s.sinr)},
                              {"sinr_db", vector_json(to_db(s.sinr))},
                              {"spectral_rate_nats", s.spectral_rate},
                              {"spectral_rate_bits", bits(s.spectral_rate)},
                              {"energy_efficiency_nats", s.energy_efficiency},
                              {"energy_efficiency_bits", bits(s.energy_efficiency)},
                              {"transmit_power_w", s.transmit_power},
                              {"iterations", s.iterations},
                              {"wall_time_s", r.wall_time_s},
                              {"trace", s.trace}});
    }
    emit(config, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  } else {
    emit(config, out, [&](std::ostream& os) {
      os << kOptimizeColumns << '\n';
      for (const auto& r : runs) {
        const auto& s = r.solution;
        for (Index k = 0; k < s.sinr.size(); ++k)
          os << to_string(r.algorithm) << ',' << k << ',' << num(inst.qos(k)) << ','
             << num(s.sinr(k)) << ',' << num(linear_to_db(s.sinr(k))) << ','
             << num(s.spectral_rate) << ',' << num(s.energy_efficiency) << ','
             << num(bits(s.energy_efficiency)) << ',' << num(s.transmit_power) << ','
             << s.iterations << ',' << num(r.wall_time_s) << '\n';
      }
    });
    auto write_w = [&](std::ostream& os) {
      os << kPrecoderColumns << '\n';
      for (const auto& r : runs)
        for (Index k = 0; k < r.solution.W.cols(); ++k)
          for (Index n = 0; n < r.solution.W.rows(); ++n)
            os << to_string(r.algorithm) << ',' << n << ',' << k << ','
               << num(r.solution.W(n, k).real()) << ',' << num(r.solution.W(n, k).imag())
               << '\n';
    };
    if (config.out) {
      std::ofstream file(precoder_path(*config.out), std::ios::binary);
      if (!file) throw IoError("cannot open '" + precoder_path(*config.out) + "' for writing");
      write_w(file);
    } else {
      out << '\n';
      write_w(out);
    }
  }
  for (const auto& r : runs)
    log << to_string(r.algorithm) << ": EE " << num(r.solution.energy_efficiency)
        << " nats/s/W, power " << num(r.solution.transmit_power) << " W, "
        << r.solution.iterations << " iterations\n";
}

void cmd_convergence(const ExperimentConfig& config, std::ostream& out, std::ostream& log) {
  const Instance inst = prepare(config);
  const SystemParams params =
      system_params(config, config.pt_dbw.front(), config.p0_dbw.front(), inst.qos);
  const auto runs =
      run_algorithms(inst.channel, params, config.algorithm, zf_config(config), sca_config(config));

  if (config.format == OutputFormat::kJson) {
    json j = header_json("convergence", config, inst.channel);
    j["traces"] = json::array();
    for (const auto& r : runs)
      j["traces"].push_back({{"algorithm", to_string(r.algorithm)},
                             {"iterations", r.solution.iterations},
                             {"objective", r.solution.trace},
                             {"energy_efficiency", r.solution.ee_trace}});
    emit(config, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  } else {
    emit(config, out, [&](std::ostream& os) {
      os << kConvergenceColumns << '\n';
      for (const auto& r : runs)
        for (std::size_t i = 0; i < r.solution.trace.size(); ++i)
          os << to_string(r.algorithm) << ',' << i + 1 << ',' << num(r.solution.trace[i]) << ','
             << num(r.solution.ee_trace[i]) << '\n';
    });
  }
  for (const auto& r : runs)
    log << to_string(r.algorithm) << ": " << r.solution.iterations << " iterations\n";
}

void cmd_sweep(const ExperimentConfig& config, std::ostream& out, std::ostream& log) {
  const Instance inst = prepare(config);
  const auto cells = run_sweep(inst.channel, config, inst.qos, zf_config(config), sca_config(config));

  if (config.format == OutputFormat::kJson) {
    json j = header_json("sweep", config, inst.channel);
    j["qos_linear"] = vector_json(inst.qos);
    j["cells"] = json::array();
    for (const auto& c : cells) {
      json cell = {{"p0_dbw", c.p0_dbw},
                   {"pt_dbw", c.pt_dbw},
                   {"algorithm", to_string(c.algorithm)},
                   {"status", c.status}};
      if (c.solution) {
        cell["energy_efficiency_nats"] = c.solution->energy_efficiency;
        cell["energy_efficiency_bits"] = bits(c.solution->energy_efficiency);
        cell["transmit_power_w"] = c.solution->transmit_power;
        cell["iterations"] = c.solution->iterations;
      } else {
        cell["energy_efficiency_nats"] = nullptr;
        cell["message"] = c.message;
      }
      j["cells"].push_back(std::move(cell));
    }
    emit(config, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  } else {
    emit(config, out, [&](std::ostream& os) {
      os << kSweepColumns << '\n';
      for (const auto& c : cells) {
        os << num(c.p0_dbw) << ',' << num(c.pt_dbw) << ',' << to_string(c.algorithm) << ','
           << c.status << ',';
        if (c.solution)
          os << num(c.solution->energy_efficiency) << ','
             << num(bits(c.solution->energy_efficiency)) << ','
             << num(c.solution->transmit_power) << ',' << c.solution->iterations;
        else
          os << ",,,";
        os << '\n';
      }
    });
  }
  std::size_t missing = 0;
  for (const auto& c : cells) missing += c.solution ? 0 : 1;
  log << cells.size() << " cells, " << missing << " missing\n";
}

int run_command(const std::string& command, const ExperimentConfig& config, std::ostream& out,
                std::ostream& log) {
  try {
    if (command == "gen-channel")
      cmd_gen_channel(config, out, log);
    else if (command == "optimize")
      cmd_optimize(config, out, log);
    else if (command == "convergence")
      cmd_convergence(config, out, log);
    else if (command == "sweep")
      cmd_sweep(config, out, log);
    else
      throw InvalidInput("unknown command '" + command + "'");
    return kExitOk;
  } catch (const Infeasible& e) {
    log << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const SolverFailure& e) {
    log << "solver failure: " << e.what() << '\n';
    return kExitSolverFailure;
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitIoOrConfig;
  }
}

}  // namespace eeprecode
