#include "eeprecode/model.hpp"

#include <array>
#include <random>
#include <string>

namespace eeprecode {

namespace {

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

// Axial hex coordinates of the first `count` cells, centre first, then ring by ring.
std::vector<std::array<double, 2>> hex_cells(Index count, double spacing) {
  static constexpr std::array<std::array<int, 2>, 6> kDirections = {
      {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}}};
  std::vector<std::array<int, 2>> axial;
  axial.push_back({0, 0});
  for (int ring = 1; static_cast<Index>(axial.size()) < count; ++ring) {
    std::array<int, 2> cell = {kDirections[4][0] * ring, kDirections[4][1] * ring};
    for (const auto& dir : kDirections) {
      for (int step = 0; step < ring; ++step) {
        axial.push_back(cell);
        cell = {cell[0] + dir[0], cell[1] + dir[1]};
      }
    }
  }
  std::vector<std::array<double, 2>> xy;
  xy.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const auto [q, r] = axial[static_cast<std::size_t>(i)];
    xy.push_back({spacing * (q + 0.5 * r), spacing * (std::sqrt(3.0) / 2.0) * r});
  }
  return xy;
}

}  // namespace

void LinkBudgetParams::validate() const {
  if (!positive(receive_gain) || !positive(wavelength) || !positive(bandwidth) ||
      !positive(boltzmann) || !positive(noise_temp))
    throw InvalidInput("link budget scalars must be finite and strictly positive");
  if (feed_gains.size() == 0 || distances.size() != feed_gains.rows())
    throw InvalidInput("link budget: distances must have one entry per feed_gains row");
  if (!(feed_gains.array() > 0.0).all() || !feed_gains.allFinite())
    throw InvalidInput("link budget: feed gains must be finite and strictly positive");
  if (!(distances.array() > 0.0).all() || !distances.allFinite())
    throw InvalidInput("link budget: distances must be finite and strictly positive");
}

double gain_entry(const LinkBudgetParams& link, Index k, Index n) {
  if (k < 0 || k >= link.users() || n < 0 || n >= link.feeds())
    throw InvalidInput("gain_entry: index out of range");
  const double path = 4.0 * std::numbers::pi * link.distances(k) / link.wavelength;
  const double noise = std::sqrt(link.boltzmann * link.noise_temp * link.bandwidth);
  return std::sqrt(link.receive_gain * link.feed_gains(k, n)) / (path * noise);
}

MatrixXd gain_matrix(const LinkBudgetParams& link) {
  link.validate();
  MatrixXd A(link.users(), link.feeds());
  for (Index k = 0; k < A.rows(); ++k)
    for (Index n = 0; n < A.cols(); ++n) A(k, n) = gain_entry(link, k, n);
  return A;
}

ChannelMatrix assemble_channel(const VectorXd& phases, const MatrixXd& gains) {
  if (phases.size() != gains.rows() || gains.size() == 0)
    throw InvalidInput("assemble_channel: need one phase per row of the gain matrix");
  if (!phases.allFinite() || !gains.allFinite())
    throw InvalidInput("assemble_channel: non-finite entry");
  ChannelMatrix channel{phases, gains, MatrixXcd(gains.rows(), gains.cols())};
  for (Index k = 0; k < gains.rows(); ++k) {
    const std::complex<double> rotation = std::polar(1.0, phases(k));
    channel.H.row(k) = rotation * gains.row(k).cast<std::complex<double>>();
  }
  for (Index k = 0; k < gains.rows(); ++k)
    if (gains.row(k).squaredNorm() == 0.0)
      throw InvalidInput("assemble_channel: row " + std::to_string(k) + " is zero");
  return channel;
}

void BeamGeometry::validate() const {
  if (!positive(beam_spacing_deg) || !positive(beamwidth_3db_deg) || !positive(roll_off) ||
      !positive(carrier_hz) || !positive(bandwidth_hz) || !positive(boltzmann) ||
      !positive(slant_range_m))
    throw InvalidInput("beam geometry: spacing, beamwidth, roll-off, carrier, bandwidth, "
                       "Boltzmann constant and slant range must be positive");
  if (!std::isfinite(peak_gain_dbi) || !std::isfinite(receive_gain_dbi) ||
      !std::isfinite(g_over_t_dbk))
    throw InvalidInput("beam geometry: gains must be finite");
  if (!(user_offset_fraction >= 0.0) || !(slant_range_spread_m >= 0.0))
    throw InvalidInput("beam geometry: offsets must be non-negative");
}

SyntheticLayout synth_layout(std::uint64_t seed, Index users, Index feeds,
                             const BeamGeometry& geometry) {
  geometry.validate();
  if (users < 1 || feeds < 1) throw InvalidInput("synth_channel: need K >= 1 and N >= 1");
  if (users > feeds)
    throw InvalidInput("synth_channel: one user per beam requires K <= N (got K=" +
                       std::to_string(users) + ", N=" + std::to_string(feeds) + ")");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto beams = hex_cells(feeds, geometry.beam_spacing_deg);
  const double max_offset = geometry.user_offset_fraction * geometry.beam_spacing_deg;
  const double peak = db_to_linear(geometry.peak_gain_dbi);

  SyntheticLayout layout;
  LinkBudgetParams& link = layout.link;
  link.receive_gain = db_to_linear(geometry.receive_gain_dbi);
  link.noise_temp = db_to_linear(geometry.receive_gain_dbi - geometry.g_over_t_dbk);
  link.wavelength = kSpeedOfLight / geometry.carrier_hz;
  link.bandwidth = geometry.bandwidth_hz;
  link.boltzmann = geometry.boltzmann;
  link.feed_gains.resize(users, feeds);
  link.distances.resize(users);
  layout.phases.resize(users);

  for (Index k = 0; k < users; ++k) {
    // Uniform point in the disc of radius max_offset around beam k.
    const double radius = max_offset * std::sqrt(unit(rng));
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const auto& centre = beams[static_cast<std::size_t>(k)];
    const double ux = centre[0] + radius * std::cos(angle);
    const double uy = centre[1] + radius * std::sin(angle);
    for (Index n = 0; n < feeds; ++n) {
      const auto& beam = beams[static_cast<std::size_t>(n)];
      const double theta2 = (ux - beam[0]) * (ux - beam[0]) + (uy - beam[1]) * (uy - beam[1]);
      link.feed_gains(k, n) = peak * std::exp(-geometry.roll_off * theta2 /
                                              (geometry.beamwidth_3db_deg *
                                               geometry.beamwidth_3db_deg));
    }
    link.distances(k) = geometry.slant_range_m + geometry.slant_range_spread_m * unit(rng);
    layout.phases(k) = 2.0 * std::numbers::pi * unit(rng);
  }
  return layout;
}

ChannelMatrix synth_channel(std::uint64_t seed, Index users, Index feeds,
                            const BeamGeometry& geometry) {
  const auto layout = synth_layout(seed, users, feeds, geometry);
  return assemble_channel(layout.phases, gain_matrix(layout.link));
}

void SystemParams::validate(Index users) const {
  if (!positive(max_power)) throw InvalidInput("max power P_T must be positive");
  if (!positive(platform_power)) throw InvalidInput("platform power P_0 must be positive");
  if (!positive(noise_power)) throw InvalidInput("noise power must be positive");
  if (!positive(bandwidth)) throw InvalidInput("bandwidth must be positive");
  if (qos.size() != users)
    throw InvalidInput("need one QoS threshold per user (got " + std::to_string(qos.size()) +
                       ", expected " + std::to_string(users) + ")");
  if (!qos.allFinite() || (qos.array() < 0.0).any())
    throw InvalidInput("QoS thresholds must be finite and non-negative");
}

PrecodingSolution evaluate_precoder(const ChannelMatrix& channel, MatrixXcd W,
                                    const SystemParams& params) {
  PrecodingSolution solution;
  solution.sinr = sinr(channel.H, W, params.noise_power);
  solution.spectral_rate = params.bandwidth * solution.sinr.array().log1p().sum();
  solution.transmit_power = transmit_power(W);
  solution.energy_efficiency =
      solution.spectral_rate / (solution.transmit_power + params.platform_power);
  solution.W = std::move(W);
  return solution;
}

}  // namespace eeprecode
