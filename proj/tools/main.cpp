#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "eeprecode/experiment.hpp"

namespace {

const char* kFooter = R"(CSV columns:
  optimize     algorithm,user,qos_linear,sinr_linear,sinr_db,spectral_rate_nats,
               energy_efficiency_nats,energy_efficiency_bits,transmit_power_w,
               iterations,wall_time_s
               (precoder in <out>.precoder.csv: algorithm,n,k,re,im)
  convergence  algorithm,iteration,objective,energy_efficiency
  sweep        p0_dbw,pt_dbw,algorithm,status,energy_efficiency_nats,
               energy_efficiency_bits,transmit_power_w,iterations

Exit codes: 0 ok, 2 infeasible, 3 solver failure, 4 I/O or configuration error.)";

}  // namespace

int main(int argc, char** argv) {
  using eeprecode::ExperimentConfig;

  CLI::App app{"Energy-efficient precoding for multibeam satellite downlinks", "eeprecode"};
  app.set_version_flag("--version", eeprecode::kVersion);
  app.footer(kFooter);
  app.set_config("--config", "", "TOML file with key = value pairs named after the long flags");
  app.require_subcommand(1, 1);
  app.fallthrough();

  ExperimentConfig config;
  std::string channel, out, algorithm = "both", format = "csv";
  app.add_option("--channel", channel, "Channel file (CSV or .json); synthetic when omitted");
  app.add_option("--seed", config.seed, "Seed for the synthetic channel and QoS draw")
      ->capture_default_str();
  app.add_option("--users", config.users, "Users K of the synthetic channel")->capture_default_str();
  app.add_option("--feeds", config.feeds, "Feeds N of the synthetic channel")->capture_default_str();
  app.add_option("--peak-gain-dbi", config.geometry.peak_gain_dbi, "Feed peak gain")
      ->capture_default_str();
  app.add_option("--algorithm", algorithm, "zf, sca or both")
      ->check(CLI::IsMember({"zf", "sca", "both"}))
      ->capture_default_str();
  app.add_option("--pt-dbw", config.pt_dbw, "Total power budget P_T in dBW (repeatable)")
      ->capture_default_str();
  app.add_option("--p0-dbw", config.p0_dbw, "Platform power P_0 in dBW (repeatable in sweep)")
      ->capture_default_str();
  app.add_option("--sigma2", config.sigma2, "Noise power")->capture_default_str();
  app.add_option("--bandwidth-hz", config.bandwidth_hz, "User bandwidth B_W")
      ->capture_default_str();
  app.add_option("--qos-db-min", config.qos_db_min, "Lower end of the SINR threshold draw")
      ->capture_default_str();
  app.add_option("--qos-db-max", config.qos_db_max, "Upper end of the SINR threshold draw")
      ->capture_default_str();
  app.add_option("--xi", config.xi, "Outer stop tolerance of both algorithms")
      ->capture_default_str();
  app.add_option("--epsilon", config.epsilon, "Bisection tolerance on lambda")
      ->capture_default_str();
  app.add_option("--out", out, "Output file; stdout when omitted");
  app.add_option("--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  app.add_subcommand("gen-channel", "Write a synthetic channel file");
  app.add_subcommand("optimize", "Run the selected algorithms on one instance");
  app.add_subcommand("convergence", "Per-iteration objective traces");
  app.add_subcommand("sweep", "Energy efficiency over the P_T grid for every P_0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : eeprecode::kExitIoOrConfig;
  }

  try {
    if (!channel.empty()) config.channel_path = channel;
    if (!out.empty()) config.out = out;
    config.algorithm = eeprecode::parse_algorithm(algorithm);
    config.format = eeprecode::parse_format(format);
  } catch (const eeprecode::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return eeprecode::kExitIoOrConfig;
  }
  return eeprecode::run_command(app.get_subcommands().front()->get_name(), config, std::cout,
                                std::cerr);
}
