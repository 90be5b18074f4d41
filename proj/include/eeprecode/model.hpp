#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "eeprecode/errors.hpp"

namespace eeprecode {

using Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using ComplexMatrix = Matrix<std::complex<Scalar>>;

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;
using MatrixXcd = Eigen::MatrixXcd;

// ---------------------------------------------------------------------------
// Units

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double linear) { return 10.0 * std::log10(linear); }
inline double dbw_to_watts(double dbw) { return db_to_linear(dbw); }

inline constexpr double kSpeedOfLight = 299792458.0;

// ---------------------------------------------------------------------------
// Link budget

/// Quantities entering one channel amplitude a_{k,n}. All gains are linear
/// power ratios; `feed_gains` is K x N, `distances` has K entries.
struct LinkBudgetParams {
  double receive_gain = 1.0;
  MatrixXd feed_gains;
  VectorXd distances;
  double wavelength = 1.0;
  double bandwidth = 1.0;
  double boltzmann = 1.38e-23;
  double noise_temp = 1.0;

  Index users() const { return feed_gains.rows(); }
  Index feeds() const { return feed_gains.cols(); }

  void validate() const;
};

/// Normalized channel amplitude between feed n and user k:
///   sqrt(G_R G_{k,n}) / (4 pi (d_k / lambda) sqrt(kappa T_R B_W)).
/// The noise power kappa T_R B_W is folded in, so the receiver noise is 1.
double gain_entry(const LinkBudgetParams& link, Index k, Index n);

/// All K x N amplitudes.
MatrixXd gain_matrix(const LinkBudgetParams& link);

// ---------------------------------------------------------------------------
// Channel

/// H = diag(exp(j phi)) A. `phases` holds phi (K), `gains` holds A (K x N).
struct ChannelMatrix {
  VectorXd phases;
  MatrixXd gains;
  MatrixXcd H;

  Index users() const { return H.rows(); }
  Index feeds() const { return H.cols(); }
};

ChannelMatrix assemble_channel(const VectorXd& phases, const MatrixXd& gains);

/// Parametric stand-in for measured multibeam data: beams on a hexagonal
/// lattice (feed n illuminates lattice cell n, ordered centre-out), one user
/// per beam placed at a random offset from its cell centre, and a Gaussian
/// roll-off G = G_max exp(-a theta^2 / theta_3dB^2) with theta the angular
/// distance between user and beam centre. Angles are in degrees.
struct BeamGeometry {
  double beam_spacing_deg = 0.5;
  double beamwidth_3db_deg = 0.55;
  double roll_off = 4.0 * std::numbers::ln2;
  double peak_gain_dbi = 64.0;
  double user_offset_fraction = 0.25;
  double receive_gain_dbi = 41.7;
  double g_over_t_dbk = 17.68;
  double carrier_hz = 20e9;
  double bandwidth_hz = 5e8;
  double boltzmann = 1.38e-23;
  double slant_range_m = 3.6e7;
  double slant_range_spread_m = 2e5;

  void validate() const;
};

struct SyntheticLayout {
  LinkBudgetParams link;
  VectorXd phases;
};

/// Deterministic in `seed`. Requires 1 <= K <= N.
SyntheticLayout synth_layout(std::uint64_t seed, Index users, Index feeds,
                             const BeamGeometry& geometry = {});

ChannelMatrix synth_channel(std::uint64_t seed, Index users, Index feeds,
                            const BeamGeometry& geometry = {});

// ---------------------------------------------------------------------------
// System parameters and solutions

struct SystemParams {
  double max_power = 1.0;       // P_T, watts
  double platform_power = 1.0;  // P_0, watts
  double noise_power = 1.0;     // sigma^2
  double bandwidth = 1.0;       // B_W, Hz
  VectorXd qos;                 // linear SINR floors, one per user

  void validate(Index users) const;
};

struct PrecodingSolution {
  MatrixXcd W;
  VectorXd sinr;
  double spectral_rate = 0.0;      // nats/s
  double energy_efficiency = 0.0;  // nats/s/W
  double transmit_power = 0.0;     // watts
  int iterations = 0;
  // Per-iteration objective: mu for zero forcing, sqrt(t) for SCA.
  std::vector<double> trace;
  // Per-iteration energy efficiency of the iterate, B_W included.
  std::vector<double> ee_trace;
};

// ---------------------------------------------------------------------------
// Metrics

namespace detail {
template <typename DerivedH, typename DerivedW>
void check_precoder_shape(const Eigen::MatrixBase<DerivedH>& H,
                          const Eigen::MatrixBase<DerivedW>& W) {
  if (H.cols() != W.rows() || H.rows() != W.cols())
    throw InvalidInput("precoder shape does not match channel (need N x K)");
}
}  // namespace detail

/// Gamma_k = |h_k w_k|^2 / (sum_{j != k} |h_k w_j|^2 + sigma^2).
template <typename DerivedH, typename DerivedW>
Vector<typename Eigen::NumTraits<typename DerivedH::Scalar>::Real> sinr(
    const Eigen::MatrixBase<DerivedH>& H, const Eigen::MatrixBase<DerivedW>& W,
    typename Eigen::NumTraits<typename DerivedH::Scalar>::Real sigma2) {
  detail::check_precoder_shape(H, W);
  // gain(k, j) = |h_k w_j|^2
  auto gain = (H * W).cwiseAbs2().eval();
  auto signal = gain.diagonal().eval();
  gain.diagonal().setZero();
  return signal.array() / (gain.rowwise().sum().array() + sigma2);
}

template <typename Derived>
typename Eigen::NumTraits<typename Derived::Scalar>::Real transmit_power(
    const Eigen::MatrixBase<Derived>& W) {
  return W.squaredNorm();
}

/// B_W sum_k ln(1 + Gamma_k), nats/s.
template <typename DerivedH, typename DerivedW>
typename Eigen::NumTraits<typename DerivedH::Scalar>::Real spectral_rate(
    const Eigen::MatrixBase<DerivedH>& H, const Eigen::MatrixBase<DerivedW>& W,
    const SystemParams& params) {
  return params.bandwidth * sinr(H, W, params.noise_power).array().log1p().sum();
}

/// Throughput over total consumed power, B_W sum ln(1+Gamma_k) / (||W||_F^2 + P_0).
template <typename DerivedH, typename DerivedW>
typename Eigen::NumTraits<typename DerivedH::Scalar>::Real energy_efficiency(
    const Eigen::MatrixBase<DerivedH>& H, const Eigen::MatrixBase<DerivedW>& W,
    const SystemParams& params) {
  return spectral_rate(H, W, params) / (transmit_power(W) + params.platform_power);
}

/// Fills every derived field of a solution from its precoder.
PrecodingSolution evaluate_precoder(const ChannelMatrix& channel, MatrixXcd W,
                                    const SystemParams& params);

}  // namespace eeprecode
