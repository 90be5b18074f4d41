#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eeprecode/model.hpp"
#include "eeprecode/sca.hpp"
#include "eeprecode/zf.hpp"

namespace eeprecode {

#ifndef EEPRECODE_VERSION
#define EEPRECODE_VERSION "0.0.0"
#endif

inline constexpr const char* kVersion = EEPRECODE_VERSION;

enum class Algorithm { kZf, kSca, kBoth };
enum class OutputFormat { kCsv, kJson };

const char* to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);
OutputFormat parse_format(const std::string& name);

// Process exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitSolverFailure = 3;
inline constexpr int kExitIoOrConfig = 4;

struct ExperimentConfig {
  std::optional<std::string> channel_path;  // synthetic channel when empty
  std::uint64_t seed = 1;
  Index users = 7;
  Index feeds = 7;
  BeamGeometry geometry;
  Algorithm algorithm = Algorithm::kBoth;
  std::vector<double> pt_dbw = {14.0};
  std::vector<double> p0_dbw = {18.75};
  double sigma2 = 1.0;
  double bandwidth_hz = 5e8;
  double qos_db_min = -2.85;
  double qos_db_max = 2.0;
  double xi = 1e-3;
  double epsilon = 0.1;
  std::optional<std::string> out;  // stdout when empty
  OutputFormat format = OutputFormat::kCsv;

  /// Throws InvalidInput.
  void validate() const;
};

/// Loads the channel file, or synthesizes one from the seed and geometry
/// (geometry bandwidth replaced by bandwidth_hz).
ChannelMatrix make_channel(const ExperimentConfig& config);

/// Per-user thresholds drawn uniformly in [qos_db_min, qos_db_max] dB from a
/// generator seeded by the config seed, returned as linear ratios.
VectorXd draw_qos(const ExperimentConfig& config, Index users);

SystemParams system_params(const ExperimentConfig& config, double pt_dbw, double p0_dbw,
                           const VectorXd& qos);
ZfConfig zf_config(const ExperimentConfig& config);
ScaConfig sca_config(const ExperimentConfig& config);

struct AlgorithmRun {
  Algorithm algorithm = Algorithm::kZf;
  PrecodingSolution solution;
  double wall_time_s = 0.0;
};

/// Runs ZF, SCA or both on one instance.
std::vector<AlgorithmRun> run_algorithms(const ChannelMatrix& channel, const SystemParams& params,
                                         Algorithm algorithm, const ZfConfig& zf,
                                         const ScaConfig& sca);

struct SweepCell {
  double p0_dbw = 0.0;
  double pt_dbw = 0.0;
  Algorithm algorithm = Algorithm::kZf;
  std::optional<PrecodingSolution> solution;  // empty when the point failed
  std::string status = "ok";                  // ok | infeasible | solver-failure
  std::string message;
};

/// Every (P_0, P_T) pair, P_0 outer; per-point failures become empty cells.
std::vector<SweepCell> run_sweep(const ChannelMatrix& channel, const ExperimentConfig& config,
                                 const VectorXd& qos, const ZfConfig& zf, const ScaConfig& sca);

// Subcommands. Each writes its table to config.out (or `out`) and a short
// summary to `log`. Errors propagate as exceptions; run_command maps them to
// exit codes.
void cmd_gen_channel(const ExperimentConfig& config, std::ostream& out, std::ostream& log);
void cmd_optimize(const ExperimentConfig& config, std::ostream& out, std::ostream& log);
void cmd_convergence(const ExperimentConfig& config, std::ostream& out, std::ostream& log);
void cmd_sweep(const ExperimentConfig& config, std::ostream& out, std::ostream& log);

int run_command(const std::string& command, const ExperimentConfig& config, std::ostream& out,
                std::ostream& log);

// Column order of the CSV tables.
inline constexpr const char* kOptimizeColumns =
    "algorithm,user,qos_linear,sinr_linear,sinr_db,spectral_rate_nats,"
    "energy_efficiency_nats,energy_efficiency_bits,transmit_power_w,iterations,wall_time_s";
inline constexpr const char* kPrecoderColumns = "algorithm,n,k,re,im";
inline constexpr const char* kConvergenceColumns = "algorithm,iteration,objective,energy_efficiency";
inline constexpr const char* kSweepColumns =
    "p0_dbw,pt_dbw,algorithm,status,energy_efficiency_nats,energy_efficiency_bits,"
    "transmit_power_w,iterations";

/// Companion file holding W next to a CSV optimize table: "run.csv" ->
/// "run.precoder.csv".
std::string precoder_path(const std::string& out);

/// Parses the precoder CSV back into one W per algorithm name.
std::vector<std::pair<std::string, MatrixXcd>> read_precoders_csv(std::istream& in, Index feeds,
                                                                  Index users);

}  // namespace eeprecode
