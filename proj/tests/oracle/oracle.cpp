#include "oracle.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "eeprecode/errors.hpp"

namespace eeprecode::oracle {

Index GridSpec::points_along(Index axis) const {
  return static_cast<Index>(std::floor((upper(axis) - lower(axis)) / step + 1e-9)) + 1;
}

double GridSpec::total_points() const {
  double total = 1.0;
  for (Index i = 0; i < dimension(); ++i) total *= static_cast<double>(points_along(i));
  return total;
}

void GridSpec::validate() const {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidInput("grid step must be positive");
  if (lower.size() != upper.size() || lower.size() == 0)
    throw InvalidInput("grid bounds must have matching, non-zero length");
  if (!lower.allFinite() || !upper.allFinite() || (upper.array() < lower.array()).any())
    throw InvalidInput("grid bounds must be finite and ordered");
  if (total_points() > kMaxGridPoints)
    throw InvalidInput("grid has " + std::to_string(total_points()) + " points, over the guard");
}

GridSpec GridSpec::for_zf(const VectorXd& floors, double max_power, double step) {
  GridSpec g;
  g.step = step;
  g.lower = (floors.array() / step - 1e-9).ceil() * step;
  g.upper = VectorXd::Constant(floors.size(), max_power);
  return g;
}

GridResult grid_zf_ee(const VectorXd& gains, double sigma2, const VectorXd& qos,
                      double max_power, double platform_power, const GridSpec& grid) {
  const Index K = gains.size();
  if (K < 1 || K > kMaxUsers) throw InvalidInput("grid oracle supports 1 to 3 users");
  if (qos.size() != K || grid.dimension() != K) throw InvalidInput("grid oracle: size mismatch");
  grid.validate();

  // Per-axis tables of alpha and ln(1 + alpha c / sigma^2).
  std::vector<std::vector<double>> alpha(K), rate(K);
  for (Index k = 0; k < K; ++k) {
    const double floor = sigma2 * qos(k) / gains(k);
    for (Index i = 0; i < grid.points_along(k); ++i) {
      const double a = grid.lower(k) + static_cast<double>(i) * grid.step;
      if (a < floor) continue;
      alpha[k].push_back(a);
      rate[k].push_back(std::log1p(a * gains(k) / sigma2));
    }
  }

  GridResult best;
  best.alpha = VectorXd::Constant(K, std::nan(""));
  best.ee = -1.0;
  std::vector<std::size_t> index(K, 0);
  const double budget = max_power * (1.0 + 1e-12);

  std::function<void(Index, double, double)> walk = [&](Index axis, double power, double sum) {
    const auto& a = alpha[axis];
    const auto& r = rate[axis];
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double p = power + a[i];
      if (p > budget) break;
      index[axis] = i;
      if (axis + 1 < K) {
        walk(axis + 1, p, sum + r[i]);
        continue;
      }
      best.evaluated += 1.0;
      const double ee = (sum + r[i]) / (p + platform_power);
      if (ee > best.ee) {
        best.ee = ee;
        for (Index k = 0; k < K; ++k) best.alpha(k) = alpha[k][index[k]];
      }
    }
  };
  walk(0, 0.0, 0.0);
  return best;
}

std::optional<double> random_precoder_search(const ChannelMatrix& channel,
                                             const SystemParams& params, std::int64_t samples,
                                             std::uint64_t seed) {
  params.validate(channel.users());
  if (samples < 1) throw InvalidInput("random search needs at least one sample");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index N = channel.feeds();
  const Index K = channel.users();
  std::optional<double> best;
  MatrixXcd W(N, K);
  for (std::int64_t s = 0; s < samples; ++s) {
    for (Index k = 0; k < K; ++k)
      for (Index n = 0; n < N; ++n) W(n, k) = {gauss(rng), gauss(rng)};
    const double power = params.max_power * (1.0 - unit(rng));  // (0, P_T]
    W *= std::sqrt(power) / W.norm();
    const VectorXd g = sinr(channel.H, W, params.noise_power);
    if ((g.array() < params.qos.array()).any()) continue;
    const double ee = energy_efficiency(channel.H, W, params);
    if (!best || ee > *best) best = ee;
  }
  return best;
}

namespace {

struct FamilyPoint {
  double u1, u2, p1, p2;
};

// Cross gains g(k, j) = |h_k v_j|^2 / ||v_j||^2 and unit directions.
struct FamilyDirections {
  Eigen::Matrix2d g;
  MatrixXcd V;
};

FamilyDirections family_directions(const MatrixXcd& H, double sigma2, double q1, double q2) {
  const Index N = H.cols();
  MatrixXcd S = sigma2 * MatrixXcd::Identity(N, N);
  S += q1 * H.row(0).adjoint() * H.row(0);
  S += q2 * H.row(1).adjoint() * H.row(1);
  MatrixXcd V = S.ldlt().solve(H.adjoint());
  V.colwise().normalize();
  FamilyDirections d{Eigen::Matrix2d::Zero(), V};
  for (Index k = 0; k < 2; ++k)
    for (Index j = 0; j < 2; ++j) d.g(k, j) = std::norm((H.row(k) * V.col(j)).value());
  return d;
}

}  // namespace

std::optional<FamilyResult> grid_two_user_family(const ChannelMatrix& channel,
                                                 const SystemParams& params, int levels) {
  if (channel.users() != 2) throw InvalidInput("family oracle needs exactly two users");
  params.validate(2);
  const MatrixXcd& H = channel.H;
  const double s2 = params.noise_power;
  const double P = params.max_power;
  const double q_scale1 = s2 / H.row(0).squaredNorm();
  const double q_scale2 = s2 / H.row(1).squaredNorm();

  auto ee_of = [&](const Eigen::Matrix2d& g, double p1, double p2) {
    const double g1 = p1 * g(0, 0) / (p2 * g(0, 1) + s2);
    const double g2 = p2 * g(1, 1) / (p1 * g(1, 0) + s2);
    if (g1 < params.qos(0) || g2 < params.qos(1)) return -1.0;
    return params.bandwidth * (std::log1p(g1) + std::log1p(g2)) / (p1 + p2 + params.platform_power);
  };

  double best_ee = -1.0;
  FamilyPoint best{};
  // Level 0: u in [-4, 4] (log10 of q relative to sigma^2 / ||h||^2), p on [0, P].
  double u_lo1 = -4.0, u_hi1 = 4.0, u_lo2 = -4.0, u_hi2 = 4.0;
  double p_lo1 = 0.0, p_hi1 = P, p_lo2 = 0.0, p_hi2 = P;
  int nu = 41, np = 101;
  for (int level = 0; level <= levels; ++level) {
    const double du1 = (u_hi1 - u_lo1) / (nu - 1), du2 = (u_hi2 - u_lo2) / (nu - 1);
    const double dp1 = (p_hi1 - p_lo1) / (np - 1), dp2 = (p_hi2 - p_lo2) / (np - 1);
    for (int a = 0; a < nu; ++a) {
      const double u1 = u_lo1 + a * du1;
      for (int b = 0; b < nu; ++b) {
        const double u2 = u_lo2 + b * du2;
        const auto d = family_directions(H, s2, q_scale1 * std::pow(10.0, u1),
                                         q_scale2 * std::pow(10.0, u2));
        for (int i = 0; i < np; ++i) {
          const double p1 = p_lo1 + i * dp1;
          for (int j = 0; j < np; ++j) {
            const double p2 = p_lo2 + j * dp2;
            if (p1 + p2 > P * (1.0 + 1e-12)) break;
            const double ee = ee_of(d.g, p1, p2);
            if (ee > best_ee) {
              best_ee = ee;
              best = {u1, u2, p1, p2};
            }
          }
        }
      }
    }
    if (best_ee < 0.0) return std::nullopt;
    // Zoom to two cells around the best point.
    u_lo1 = best.u1 - 2 * du1, u_hi1 = best.u1 + 2 * du1;
    u_lo2 = best.u2 - 2 * du2, u_hi2 = best.u2 + 2 * du2;
    p_lo1 = std::max(0.0, best.p1 - 2 * dp1), p_hi1 = std::min(P, best.p1 + 2 * dp1);
    p_lo2 = std::max(0.0, best.p2 - 2 * dp2), p_hi2 = std::min(P, best.p2 + 2 * dp2);
    nu = 21, np = 21;
  }
  const auto d = family_directions(H, s2, q_scale1 * std::pow(10.0, best.u1),
                                   q_scale2 * std::pow(10.0, best.u2));
  FamilyResult out;
  out.W = d.V;
  out.W.col(0) *= std::sqrt(best.p1);
  out.W.col(1) *= std::sqrt(best.p2);
  out.ee = energy_efficiency(H, out.W, params);
  return out;
}

SampleResult sample_subproblem(const ChannelMatrix& channel, const SystemParams& params,
                               const cone::SubproblemSpec& spec, const MatrixXcd& centre,
                               std::int64_t samples, std::uint64_t seed) {
  const MatrixXcd& H = channel.H;
  const Index K = channel.users();
  const Index N = channel.feeds();
  const cone::Affine* xi = nullptr;
  std::vector<const cone::Affine*> upsilon(static_cast<std::size_t>(K), nullptr);
  for (const auto& c : spec.constraints) {
    const auto* row = std::get_if<cone::LinearInequality>(&c.body);
    if (!row) continue;
    if (c.name == "xi") xi = &row->expr;
    for (Index k = 0; k < K; ++k)
      if (c.name == "upsilon[" + std::to_string(k) + "]") upsilon[static_cast<std::size_t>(k)] = &row->expr;
  }
  if (!xi) throw InvalidInput("spec has no xi row");
  for (const auto* u : upsilon)
    if (!u) throw InvalidInput("spec is missing an upsilon row");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = std::max(centre.norm(), std::sqrt(params.max_power)) / std::sqrt(double(N * K));

  SampleResult result;
  MatrixXcd W(N, K);
  VectorXd x(spec.dimension());
  for (std::int64_t s = 0; s < samples; ++s) {
    const double radius = scale * std::pow(10.0, -6.0 + 6.5 * unit(rng));
    for (Index k = 0; k < K; ++k)
      for (Index n = 0; n < N; ++n) W(n, k) = centre(n, k) + radius * std::complex<double>(gauss(rng), gauss(rng));
    if (W.squaredNorm() > params.max_power) W *= std::sqrt(params.max_power / W.squaredNorm());
    for (Index k = 0; k < K; ++k) {
      const std::complex<double> hw = (H.row(k) * W.col(k)).value();
      if (std::abs(hw) > 0.0) W.col(k) *= std::conj(hw) / std::abs(hw);
    }

    x.setZero();
    for (Index k = 0; k < K; ++k)
      for (Index n = 0; n < N; ++n) {
        x(spec.index("w_re", n + N * k)) = W(n, k).real();
        x(spec.index("w_im", n + N * k)) = W(n, k).imag();
      }
    const double zp = W.squaredNorm() + params.platform_power;
    x(spec.index("zp")) = zp;
    x(spec.index("z")) = zp * zp;
    bool ok = true;
    for (Index k = 0; k < K && ok; ++k) {
      double interference = 0.0;
      for (Index j = 0; j < K; ++j)
        if (j != k) interference += std::norm((H.row(k) * W.col(j)).value());
      const Index gk = spec.index("gamma", k);
      x(spec.index("beta", k)) = params.noise_power + interference;
      x(gk) = 0.0;
      const auto& row = *upsilon[static_cast<std::size_t>(k)];
      const double gamma = row(x) / -row.coeffs(gk);
      if (!(gamma > 0.0)) ok = false;
      x(gk) = gamma;
      x(spec.index("rho", k)) = std::log(gamma);
    }
    if (!ok) continue;
    const Index ti = spec.index("t");
    x(ti) = 0.0;
    x(ti) = (*xi)(x) / -xi->coeffs(ti);
    if (!cone::check_feasible(spec, x, 1e-10).feasible) continue;
    ++result.feasible;
    result.best_t = std::max(result.best_t, x(ti));
  }
  return result;
}

}  // namespace eeprecode::oracle
