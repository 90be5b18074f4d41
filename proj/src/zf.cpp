#include "eeprecode/zf.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace eeprecode {

namespace {

// Relative slack for comparing a power sum against the budget.
constexpr double kBudgetSlack = 1e-12;

bool fits(double used, double budget) { return used <= budget * (1.0 + kBudgetSlack); }

VectorXd allocate(double mu, double lambda, const VectorXd& gains, double sigma2,
                  const VectorXd& qos) {
  VectorXd alpha(gains.size());
  for (Index k = 0; k < gains.size(); ++k)
    alpha(k) = optimal_alpha(mu, lambda, gains(k), sigma2, qos(k));
  return alpha;
}

// Exact water level for the active set observed at `lambda`. Returns the new
// multiplier, or a negative value when the set is not self-consistent.
double exact_lambda(double mu, double lambda, const VectorXd& gains, double sigma2,
                    const VectorXd& floors, double max_power) {
  const double level = 1.0 / (mu + lambda);
  double fixed = 0.0;
  double offsets = 0.0;
  int free_users = 0;
  for (Index k = 0; k < gains.size(); ++k) {
    if (level - sigma2 / gains(k) > floors(k)) {
      offsets += sigma2 / gains(k);
      ++free_users;
    } else {
      fixed += floors(k);
    }
  }
  if (free_users == 0) return -1.0;
  const double exact_level = (max_power - fixed + offsets) / free_users;
  if (!(exact_level > 0.0)) return -1.0;
  for (Index k = 0; k < gains.size(); ++k) {
    const bool was_free = level - sigma2 / gains(k) > floors(k);
    const bool is_free = exact_level - sigma2 / gains(k) > floors(k);
    if (was_free != is_free) return -1.0;
  }
  return 1.0 / exact_level - mu;
}

}  // namespace

ZfDirections zf_directions(const ChannelMatrix& channel, double max_condition) {
  const MatrixXcd& H = channel.H;
  if (H.rows() > H.cols())
    throw InvalidInput("zero forcing needs K <= N (got K=" + std::to_string(H.rows()) +
                       ", N=" + std::to_string(H.cols()) + ")");
  Eigen::JacobiSVD<MatrixXcd> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  const double condition = smin > 0.0 ? (smax / smin) * (smax / smin)
                                      : std::numeric_limits<double>::infinity();
  if (!(condition <= max_condition)) {
    std::ostringstream msg;
    msg << "channel is ill-conditioned for zero forcing: cond(H H^H) ~ " << condition
        << " exceeds " << max_condition;
    throw IllConditioned(msg.str(), condition);
  }
  ZfDirections out;
  // Pseudo-inverse H^+ = V S^{-1} U^H equals H^H (H H^H)^{-1} for full row rank.
  out.B = svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().adjoint();
  out.gains.resize(H.rows());
  for (Index k = 0; k < H.rows(); ++k) {
    const std::complex<double> hb = (H.row(k) * out.B.col(k)).value();
    out.gains(k) = std::norm(hb) / out.B.col(k).squaredNorm();
  }
  out.condition = condition;
  return out;
}

double optimal_alpha(double mu, double lambda, double gain, double sigma2, double qos) {
  if (!(mu + lambda > 0.0))
    throw InvalidInput("optimal_alpha: water level undefined for mu + lambda <= 0");
  return std::max(1.0 / (mu + lambda) - sigma2 / gain, sigma2 * qos / gain);
}

VectorXd qos_floor_powers(const VectorXd& gains, double sigma2, const VectorXd& qos) {
  return sigma2 * qos.cwiseQuotient(gains);
}

void check_zf_feasible(const VectorXd& gains, const SystemParams& params) {
  const VectorXd floors = qos_floor_powers(gains, params.noise_power, params.qos);
  if (fits(floors.sum(), params.max_power)) return;
  std::vector<int> users(static_cast<std::size_t>(floors.size()));
  std::iota(users.begin(), users.end(), 0);
  std::sort(users.begin(), users.end(), [&](int a, int b) { return floors(a) > floors(b); });
  // Report the smallest prefix of large floors that alone breaks the budget.
  double acc = 0.0;
  std::size_t count = 0;
  while (count < users.size() && fits(acc, params.max_power)) acc += floors(users[count++]);
  users.resize(count);
  std::ostringstream msg;
  msg << "QoS floors need " << floors.sum() << " W but P_T is " << params.max_power
      << " W; violating users:";
  for (int u : users) msg << ' ' << u;
  throw Infeasible(msg.str(), users);
}

BisectionResult bisect_lambda(const VectorXd& gains, double sigma2, const VectorXd& qos,
                              double mu, double max_power, double epsilon,
                              double lambda_upper) {
  if (!(epsilon > 0.0)) throw InvalidInput("bisection tolerance must be positive");
  if (!(lambda_upper > 0.0)) throw InvalidInput("lambda upper bound must be positive");
  if (gains.size() != qos.size()) throw InvalidInput("bisect_lambda: size mismatch");
  SystemParams budget;
  budget.max_power = max_power;
  budget.noise_power = sigma2;
  budget.qos = qos;
  check_zf_feasible(gains, budget);
  const VectorXd floors = qos_floor_powers(gains, sigma2, qos);

  BisectionResult result;
  if (mu > 0.0) {
    VectorXd alpha = allocate(mu, 0.0, gains, sigma2, qos);
    if (fits(alpha.sum(), max_power)) {
      result.alpha = std::move(alpha);
      return result;
    }
  }

  double lo = 0.0;
  double hi = lambda_upper;
  while (!fits(allocate(mu, hi, gains, sigma2, qos).sum(), max_power)) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw SolverFailure("bisect_lambda: upper bracket diverged");
  }
  while (hi - lo > epsilon) {
    const double mid = 0.5 * (lo + hi);
    if (fits(allocate(mu, mid, gains, sigma2, qos).sum(), max_power))
      hi = mid;
    else
      lo = mid;
    ++result.steps;
  }

  result.lambda = hi;
  const double polished = exact_lambda(mu, hi, gains, sigma2, floors, max_power);
  if (polished >= lo && polished <= hi && mu + polished > 0.0) {
    VectorXd alpha = allocate(mu, polished, gains, sigma2, qos);
    if (fits(alpha.sum(), max_power)) {
      result.lambda = polished;
      result.alpha = std::move(alpha);
      return result;
    }
  }
  result.alpha = allocate(mu, hi, gains, sigma2, qos);
  return result;
}

double dinkelbach_update(const VectorXd& alpha, const VectorXd& gains, double sigma2,
                         double platform_power) {
  const double rate = (alpha.cwiseProduct(gains) / sigma2).array().log1p().sum();
  return rate / (alpha.sum() + platform_power);
}

MatrixXcd zf_precoder(const ZfDirections& directions, const VectorXd& alpha) {
  MatrixXcd W(directions.B.rows(), directions.B.cols());
  for (Index k = 0; k < W.cols(); ++k)
    W.col(k) = std::sqrt(alpha(k)) * directions.B.col(k).normalized();
  return W;
}

ZfState zf_optimize(const ChannelMatrix& channel, const SystemParams& params,
                    const ZfConfig& config) {
  params.validate(channel.users());
  if (!(config.xi > 0.0)) throw InvalidInput("Dinkelbach tolerance xi must be positive");
  ZfState state;
  state.directions = zf_directions(channel, config.max_condition);
  const VectorXd& gains = state.directions.gains;
  check_zf_feasible(gains, params);

  double mu = 0.0;
  for (int i = 1; i <= config.max_iterations; ++i) {
    auto bisection = bisect_lambda(gains, params.noise_power, params.qos, mu,
                                   params.max_power, config.epsilon, config.lambda_upper);
    const double next =
        dinkelbach_update(bisection.alpha, gains, params.noise_power, params.platform_power);
    state.mu_trace.push_back(next);
    state.alpha = std::move(bisection.alpha);
    state.lambda = bisection.lambda;
    state.mu = next;
    state.iteration = i;
    if (std::abs(next - mu) <= config.xi) return state;
    mu = next;
  }
  throw SolverFailure("Dinkelbach iteration did not converge within " +
                          std::to_string(config.max_iterations) + " iterations",
                      state.mu_trace);
}

PrecodingSolution zf_precode(const ChannelMatrix& channel, const SystemParams& params,
                             const ZfConfig& config) {
  const ZfState state = zf_optimize(channel, params, config);
  auto solution =
      evaluate_precoder(channel, zf_precoder(state.directions, state.alpha), params);
  solution.iterations = state.iteration;
  solution.trace = state.mu_trace;
  for (double mu : state.mu_trace) solution.ee_trace.push_back(params.bandwidth * mu);
  return solution;
}

}  // namespace eeprecode
