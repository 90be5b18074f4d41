#pragma once

#include <vector>

#include "eeprecode/model.hpp"

namespace eeprecode {

/// Zero-forcing directions B = H^H (H H^H)^{-1} (N x K) and the effective
/// gain c_k = |h_k b_k|^2 / ||b_k||^2 seen by user k when its precoder is
/// w_k = sqrt(alpha_k) b_k / ||b_k||, so that Gamma_k = alpha_k c_k / sigma^2
/// and ||w_k||^2 = alpha_k.
struct ZfDirections {
  MatrixXcd B;
  VectorXd gains;
  double condition = 1.0;  // condition number of H H^H
};

struct ZfConfig {
  double lambda_upper = 1000.0;  // initial upper bracket, doubled on demand
  double epsilon = 0.1;          // bisection interval tolerance
  double xi = 1e-3;              // Dinkelbach stop tolerance on mu
  int max_iterations = 1000;
  double max_condition = 1e12;
};

/// Algorithm state after the final outer iteration.
struct ZfState {
  ZfDirections directions;
  VectorXd alpha;  // per-user power, watts
  double mu = 0.0;
  double lambda = 0.0;
  int iteration = 0;
  std::vector<double> mu_trace;  // mu^(1), mu^(2), ...
};

/// Throws IllConditioned when cond(H H^H) exceeds `max_condition`.
ZfDirections zf_directions(const ChannelMatrix& channel, double max_condition = 1e12);

/// Closed-form maximizer of ln(1 + alpha c / sigma^2) - (mu + lambda) alpha
/// over alpha >= sigma^2 qos / c:
///   max(1 / (mu + lambda) - sigma^2 / c, sigma^2 qos / c).
double optimal_alpha(double mu, double lambda, double gain, double sigma2, double qos);

/// Minimum power sigma^2 qos_k / c_k each user needs to meet its floor.
VectorXd qos_floor_powers(const VectorXd& gains, double sigma2, const VectorXd& qos);

struct BisectionResult {
  double lambda = 0.0;
  VectorXd alpha;
  int steps = 0;
};

/// Bisection on the power multiplier so that sum_k alpha_k <= P_T. Returns
/// lambda = 0 when the unconstrained water level already fits (mu > 0 only).
/// After the bracket shrinks below `epsilon` the water level is solved
/// exactly for the active set at the upper bracket when that set is
/// self-consistent. Throws Infeasible when the QoS floors alone exceed P_T.
BisectionResult bisect_lambda(const VectorXd& gains, double sigma2, const VectorXd& qos,
                              double mu, double max_power, double epsilon,
                              double lambda_upper = 1000.0);

/// mu = sum ln(1 + alpha_k c_k / sigma^2) / (sum alpha_k + P_0).
double dinkelbach_update(const VectorXd& alpha, const VectorXd& gains, double sigma2,
                         double platform_power);

/// w_k = sqrt(alpha_k) b_k / ||b_k||.
MatrixXcd zf_precoder(const ZfDirections& directions, const VectorXd& alpha);

/// Throws Infeasible listing the users whose floors do not fit in P_T.
void check_zf_feasible(const VectorXd& gains, const SystemParams& params);

ZfState zf_optimize(const ChannelMatrix& channel, const SystemParams& params,
                    const ZfConfig& config = {});

/// Dinkelbach outer loop with inner bisection (mu starts at 0). The trace
/// holds mu per outer iteration, without the B_W factor.
PrecodingSolution zf_precode(const ChannelMatrix& channel, const SystemParams& params,
                             const ZfConfig& config = {});

}  // namespace eeprecode
