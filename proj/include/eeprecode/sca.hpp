#pragma once

#include <vector>

#include "eeprecode/cone.hpp"
#include "eeprecode/model.hpp"
#include "eeprecode/zf.hpp"

namespace eeprecode {

/// First-order expansion f(x0, y0) + slope_x (x - x0) + slope_y (y - y0) of a
/// concave two-argument function, which upper-bounds it everywhere.
struct LinearBound {
  double anchor_x = 0.0;
  double anchor_y = 0.0;
  double value = 0.0;  // f at the anchor
  double slope_x = 0.0;
  double slope_y = 0.0;

  double operator()(double x, double y) const {
    return value + slope_x * (x - anchor_x) + slope_y * (y - anchor_y);
  }
  double constant() const { return value - slope_x * anchor_x - slope_y * anchor_y; }
};

/// Tangent plane of sqrt(t z) at (t0, z0). Requires t0, z0 > 0.
LinearBound xi_bound(double t0, double z0);
double taylor_xi(double t, double z, double t0, double z0);

/// Tangent plane of sqrt((gamma - 1) beta) at (gamma0, beta0). Requires
/// gamma0 > 1 and beta0 > 0.
LinearBound upsilon_bound(double gamma0, double beta0);
double taylor_upsilon(double gamma, double beta, double gamma0, double beta0);

/// One point of the epigraph reformulation. t is the squared energy
/// efficiency (bandwidth dropped), z the squared total power, zp the total
/// power, gamma the 1 + SINR surrogate, rho the log-rate surrogate and beta
/// the interference-plus-noise surrogate.
struct ScaIterate {
  MatrixXcd W;
  double t = 0.0;
  double z = 0.0;
  double zp = 0.0;
  VectorXd gamma;
  VectorXd rho;
  VectorXd beta;
};

enum class ScaStart {
  kMinimumQos,   // zero-forcing directions at the QoS floor powers (lifted)
  kZeroForcing,  // the Dinkelbach zero-forcing optimum
};

struct ScaConfig {
  double xi = 1e-3;
  int max_iterations = 200;
  double power_floor_fraction = 1e-3;  // delta: initial powers >= delta P_T / K
  double decrease_tolerance = 1e-7;
  ScaStart start = ScaStart::kZeroForcing;
  ZfConfig zf{.epsilon = 1e-9, .xi = 1e-12};  // start point, converged tightly
  cone::SolverOptions solver;
};

/// Layout of the real decision vector: t, z, zp, Re W, Im W (column-major),
/// gamma, rho, beta.
struct ScaLayout {
  Index users = 0;
  Index feeds = 0;
  Index t = 0, z = 0, zp = 0, w_re = 0, w_im = 0, gamma = 0, rho = 0, beta = 0;
  Index dimension = 0;

  ScaLayout(Index users, Index feeds);
  VectorXd pack(const ScaIterate& iterate) const;
  ScaIterate unpack(const VectorXd& x) const;
};

/// Rotates each column so that h_k w_k is real and non-negative, then fills
/// every surrogate with equality: gamma = 1 + Gamma, beta = sigma^2 +
/// interference, zp = ||W||^2 + P_0, z = zp^2, rho = ln gamma,
/// t = (sum rho)^2 / z.
ScaIterate iterate_from_precoder(const ChannelMatrix& channel, const SystemParams& params,
                                 MatrixXcd W);

/// Zero-forcing directions at max(sigma^2 qos_k / c_k, delta P_T / K).
ScaIterate init_feasible(const ChannelMatrix& channel, const SystemParams& params,
                         const ScaConfig& config = {});

/// Convex subproblem around `anchor`: maximize t subject to the Xi row, the
/// Upsilon rows, total power, the two z-chain cones, QoS cones with
/// Im(h_k w_k) = 0, gamma_k >= exp(rho_k), and the interference cones.
cone::SubproblemSpec build_subproblem(const ChannelMatrix& channel,
                                      const SystemParams& params, const ScaIterate& anchor);

/// Strictly feasible point of build_subproblem(anchor) near the anchor.
/// Throws SolverFailure if none can be constructed.
VectorXd interior_start(const ChannelMatrix& channel, const SystemParams& params,
                        const ScaIterate& anchor, const cone::SubproblemSpec& spec);

struct ScaRun {
  PrecodingSolution solution;
  std::vector<ScaIterate> iterates;  // iterates[0] is the start
  std::vector<cone::SolverReport> reports;
  std::vector<cone::SubproblemSpec> specs;
};

/// Full SCA loop; keeps every subproblem and solver report.
ScaRun sca_optimize(const ChannelMatrix& channel, const SystemParams& params,
                    const ScaConfig& config = {});

/// SCA loop until |t_i - t_{i-1}| <= xi. The trace holds sqrt(t) per
/// iteration; the reported efficiency is recomputed from W.
PrecodingSolution sca_precode(const ChannelMatrix& channel, const SystemParams& params,
                              const ScaConfig& config = {});

}  // namespace eeprecode
