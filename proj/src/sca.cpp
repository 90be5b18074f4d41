#include "eeprecode/sca.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <sstream>

namespace eeprecode {

namespace {

constexpr double kGammaFloor = 1.0 + 1e-9;
constexpr double kAnchorFloor = 1e-12;
// Relative margin used to push a tight point into the interior.
constexpr double kInteriorMargin = 1e-4;
constexpr double kMinStartSlack = 1e-10;

using cone::Affine;

// Real and imaginary parts of h_k w_j as affine forms of the decision vector.
struct ChannelForms {
  const ScaLayout& layout;
  const MatrixXcd& H;

  Affine re(Index k, Index j) const {
    Affine a = Affine::zero(layout.dimension);
    for (Index n = 0; n < layout.feeds; ++n) {
      const Index at = j * layout.feeds + n;
      a.coeffs(layout.w_re + at) = H(k, n).real();
      a.coeffs(layout.w_im + at) = -H(k, n).imag();
    }
    return a;
  }

  Affine im(Index k, Index j) const {
    Affine a = Affine::zero(layout.dimension);
    for (Index n = 0; n < layout.feeds; ++n) {
      const Index at = j * layout.feeds + n;
      a.coeffs(layout.w_re + at) = H(k, n).imag();
      a.coeffs(layout.w_im + at) = H(k, n).real();
    }
    return a;
  }

  // Rows [Re h_k w_j; Im h_k w_j] for every j != k.
  MatrixXd interference_rows(Index k) const {
    MatrixXd rows = MatrixXd::Zero(2 * (layout.users - 1), layout.dimension);
    Index r = 0;
    for (Index j = 0; j < layout.users; ++j) {
      if (j == k) continue;
      rows.row(r++) = re(k, j).coeffs.transpose();
      rows.row(r++) = im(k, j).coeffs.transpose();
    }
    return rows;
  }
};

Affine unit(Index dimension, Index at, double scale = 1.0, double constant = 0.0) {
  Affine a = Affine::zero(dimension);
  a.coeffs(at) = scale;
  a.constant = constant;
  return a;
}

double interference(const MatrixXcd& H, const MatrixXcd& W, Index k) {
  double total = 0.0;
  for (Index j = 0; j < W.cols(); ++j)
    if (j != k) total += std::norm((H.row(k) * W.col(j)).value());
  return total;
}

struct Anchors {
  double t, z;
  VectorXd gamma, beta;
};

Anchors safeguarded(const ScaIterate& it) {
  return {std::max(it.t, kAnchorFloor), std::max(it.z, kAnchorFloor),
          it.gamma.cwiseMax(kGammaFloor), it.beta.cwiseMax(kAnchorFloor)};
}

}  // namespace

LinearBound xi_bound(double t0, double z0) {
  if (!(t0 > 0.0) || !(z0 > 0.0))
    throw InvalidInput("Xi bound needs a strictly positive anchor (t0, z0)");
  return {t0, z0, std::sqrt(t0 * z0), 0.5 * std::sqrt(z0 / t0), 0.5 * std::sqrt(t0 / z0)};
}

double taylor_xi(double t, double z, double t0, double z0) { return xi_bound(t0, z0)(t, z); }

LinearBound upsilon_bound(double gamma0, double beta0) {
  if (!(gamma0 > 1.0)) throw InvalidInput("Upsilon bound needs gamma0 > 1");
  if (!(beta0 > 0.0)) throw InvalidInput("Upsilon bound needs beta0 > 0");
  const double g = gamma0 - 1.0;
  return {gamma0, beta0, std::sqrt(g * beta0), 0.5 * std::sqrt(beta0 / g),
          0.5 * std::sqrt(g / beta0)};
}

double taylor_upsilon(double gamma, double beta, double gamma0, double beta0) {
  return upsilon_bound(gamma0, beta0)(gamma, beta);
}

ScaLayout::ScaLayout(Index users_, Index feeds_) : users(users_), feeds(feeds_) {
  t = 0;
  z = 1;
  zp = 2;
  w_re = 3;
  w_im = w_re + users * feeds;
  gamma = w_im + users * feeds;
  rho = gamma + users;
  beta = rho + users;
  dimension = beta + users;
}

VectorXd ScaLayout::pack(const ScaIterate& it) const {
  VectorXd x(dimension);
  x(t) = it.t;
  x(z) = it.z;
  x(zp) = it.zp;
  x.segment(w_re, users * feeds) = it.W.real().reshaped();
  x.segment(w_im, users * feeds) = it.W.imag().reshaped();
  x.segment(gamma, users) = it.gamma;
  x.segment(rho, users) = it.rho;
  x.segment(beta, users) = it.beta;
  return x;
}

ScaIterate ScaLayout::unpack(const VectorXd& x) const {
  ScaIterate it;
  it.t = x(t);
  it.z = x(z);
  it.zp = x(zp);
  const MatrixXd re = x.segment(w_re, users * feeds).reshaped(feeds, users);
  const MatrixXd im = x.segment(w_im, users * feeds).reshaped(feeds, users);
  it.W = re.cast<std::complex<double>>() + std::complex<double>(0.0, 1.0) * im.cast<std::complex<double>>();
  it.gamma = x.segment(gamma, users);
  it.rho = x.segment(rho, users);
  it.beta = x.segment(beta, users);
  return it;
}

ScaIterate iterate_from_precoder(const ChannelMatrix& channel, const SystemParams& params,
                                 MatrixXcd W) {
  const MatrixXcd& H = channel.H;
  detail::check_precoder_shape(H, W);
  for (Index k = 0; k < W.cols(); ++k) {
    const std::complex<double> hw = (H.row(k) * W.col(k)).value();
    if (std::abs(hw) > 0.0) W.col(k) *= std::conj(hw) / std::abs(hw);
  }
  ScaIterate it;
  const VectorXd gamma_minus_one = sinr(H, W, params.noise_power);
  it.gamma = gamma_minus_one.array() + 1.0;
  it.rho = it.gamma.array().log();
  it.beta.resize(W.cols());
  for (Index k = 0; k < W.cols(); ++k)
    it.beta(k) = params.noise_power + interference(H, W, k);
  it.zp = W.squaredNorm() + params.platform_power;
  it.z = it.zp * it.zp;
  const double rate = it.rho.sum();
  it.t = rate * rate / it.z;
  it.W = std::move(W);
  return it;
}

ScaIterate init_feasible(const ChannelMatrix& channel, const SystemParams& params,
                         const ScaConfig& config) {
  params.validate(channel.users());
  const auto dirs = zf_directions(channel, config.zf.max_condition);
  check_zf_feasible(dirs.gains, params);
  const VectorXd floors = qos_floor_powers(dirs.gains, params.noise_power, params.qos);
  const auto users = static_cast<double>(channel.users());
  const double lift = config.power_floor_fraction * params.max_power / users;
  VectorXd alpha = floors.cwiseMax(lift);
  if (alpha.sum() > params.max_power) {
    const double headroom = std::max(0.0, params.max_power - floors.sum());
    alpha = floors.array() + std::min(lift, headroom / (2.0 * users));
  }
  return iterate_from_precoder(channel, params, zf_precoder(dirs, alpha));
}

cone::SubproblemSpec build_subproblem(const ChannelMatrix& channel,
                                      const SystemParams& params, const ScaIterate& anchor) {
  const Index K = channel.users();
  const Index N = channel.feeds();
  params.validate(K);
  if (anchor.W.rows() != N || anchor.W.cols() != K || anchor.gamma.size() != K ||
      anchor.beta.size() != K)
    throw InvalidInput("build_subproblem: iterate dimensions do not match the channel");
  const ScaLayout L(K, N);
  const Index n = L.dimension;
  const Anchors a = safeguarded(anchor);
  const ChannelForms forms{L, channel.H};
  const double sigma = std::sqrt(params.noise_power);

  cone::SubproblemSpec spec;
  spec.add_block("t", 1);
  spec.add_block("z", 1);
  spec.add_block("zp", 1);
  spec.add_block("w_re", N * K);
  spec.add_block("w_im", N * K);
  spec.add_block("gamma", K);
  spec.add_block("rho", K);
  spec.add_block("beta", K);
  spec.objective(L.t) = 1.0;

  // sum rho >= Xi(t, z)
  {
    const LinearBound xi = xi_bound(a.t, a.z);
    Affine row = Affine::zero(n);
    row.coeffs.segment(L.rho, K).setOnes();
    row.coeffs(L.t) = -xi.slope_x;
    row.coeffs(L.z) = -xi.slope_y;
    row.constant = -xi.constant();
    spec.constraints.push_back({"xi", cone::LinearInequality{row}});
  }
  // Re(h_k w_k) >= Upsilon_k(gamma_k, beta_k)
  for (Index k = 0; k < K; ++k) {
    const LinearBound up = upsilon_bound(a.gamma(k), a.beta(k));
    Affine row = forms.re(k, k);
    row.coeffs(L.gamma + k) -= up.slope_x;
    row.coeffs(L.beta + k) -= up.slope_y;
    row.constant -= up.constant();
    spec.constraints.push_back({"upsilon[" + std::to_string(k) + "]", cone::LinearInequality{row}});
  }
  // ||vec W|| <= sqrt(P_T)
  {
    MatrixXd A = MatrixXd::Zero(2 * N * K, n);
    A.middleCols(L.w_re, 2 * N * K).setIdentity();
    spec.constraints.push_back({"power", cone::SecondOrderCone{
                                             A, VectorXd::Zero(2 * N * K),
                                             Affine{VectorXd::Zero(n), std::sqrt(params.max_power)}}});
  }
  // (z + 1)/2 >= ||[(z - 1)/2, zp]||  and  (zp - P0 + 1)/2 >= ||[(zp - P0 - 1)/2, vec W]||
  {
    MatrixXd A = MatrixXd::Zero(2, n);
    A(0, L.z) = 0.5;
    A(1, L.zp) = 1.0;
    VectorXd b(2);
    b << -0.5, 0.0;
    spec.constraints.push_back(
        {"z_chain[0]", cone::SecondOrderCone{A, b, unit(n, L.z, 0.5, 0.5)}});
  }
  {
    MatrixXd A = MatrixXd::Zero(1 + 2 * N * K, n);
    A(0, L.zp) = 0.5;
    A.bottomRows(2 * N * K).middleCols(L.w_re, 2 * N * K).setIdentity();
    VectorXd b = VectorXd::Zero(1 + 2 * N * K);
    b(0) = -0.5 * (params.platform_power + 1.0);
    spec.constraints.push_back(
        {"z_chain[1]",
         cone::SecondOrderCone{A, b, unit(n, L.zp, 0.5, 0.5 * (1.0 - params.platform_power))}});
  }
  // sqrt(qos_k) ||[sigma, h_k w_j (j != k)]|| <= Re(h_k w_k),  Im(h_k w_k) = 0
  for (Index k = 0; k < K; ++k) {
    const double scale = std::sqrt(params.qos(k));
    MatrixXd A = MatrixXd::Zero(1 + 2 * (K - 1), n);
    A.bottomRows(2 * (K - 1)) = scale * forms.interference_rows(k);
    VectorXd b = VectorXd::Zero(A.rows());
    b(0) = scale * sigma;
    const std::string tag = "[" + std::to_string(k) + "]";
    spec.constraints.push_back({"qos" + tag, cone::SecondOrderCone{A, b, forms.re(k, k)}});
    spec.constraints.push_back({"qos_im" + tag, cone::LinearEquality{forms.im(k, k)}});
  }
  // gamma_k >= exp(rho_k)
  for (Index k = 0; k < K; ++k)
    spec.constraints.push_back({"exp[" + std::to_string(k) + "]",
                                cone::ExpBound{unit(n, L.rho + k), unit(n, L.gamma + k)}});
  // beta_k - sigma^2 >= sum_{j != k} |h_k w_j|^2
  for (Index k = 0; k < K; ++k) {
    const MatrixXd A = forms.interference_rows(k);
    spec.constraints.push_back(
        {"interference[" + std::to_string(k) + "]",
         cone::RotatedCone{A, VectorXd::Zero(A.rows()),
                           unit(n, L.beta + k, 1.0, -params.noise_power),
                           Affine{VectorXd::Zero(n), 1.0}}});
  }
  return spec;
}

VectorXd interior_start(const ChannelMatrix& channel, const SystemParams& params,
                        const ScaIterate& anchor, const cone::SubproblemSpec& spec) {
  const MatrixXcd& H = channel.H;
  const Index K = channel.users();
  const ScaLayout L(K, channel.feeds());
  const Anchors a = safeguarded(anchor);
  const LinearBound xi = xi_bound(a.t, a.z);
  constexpr double eta = kInteriorMargin;

  // Strictly interior zero-forcing point: floors plus half the headroom.
  const auto dirs = zf_directions(channel);
  const VectorXd floors = qos_floor_powers(dirs.gains, params.noise_power, params.qos);
  const double headroom = params.max_power - floors.sum();
  const MatrixXcd W_inner =
      zf_precoder(dirs, floors.array() + std::max(0.0, headroom) / (2.0 * K));

  // Completes W with the largest t the subproblem allows, backed off by eta.
  auto complete = [&](const MatrixXcd& W) -> std::optional<VectorXd> {
    ScaIterate it;
    it.W = W;
    it.zp = (params.platform_power + W.squaredNorm()) * (1.0 + eta);
    it.z = it.zp * it.zp * (1.0 + eta);
    it.gamma.resize(K);
    it.rho.resize(K);
    it.beta.resize(K);
    for (Index k = 0; k < K; ++k) {
      const LinearBound up = upsilon_bound(a.gamma(k), a.beta(k));
      it.beta(k) = (params.noise_power + interference(H, W, k)) * (1.0 + eta);
      const double signal = (H.row(k) * W.col(k)).value().real() * (1.0 - eta);
      it.gamma(k) = up.anchor_x +
                    (signal - up.value - up.slope_y * (it.beta(k) - up.anchor_y)) / up.slope_x;
      if (!(it.gamma(k) > 0.0)) return std::nullopt;
      it.rho(k) = std::log(it.gamma(k)) - eta;
    }
    const double rate = it.rho.sum();
    const double room = rate - eta * (std::abs(rate) + 1e-12);
    it.t = xi.anchor_x + (room - xi.value - xi.slope_y * (it.z - xi.anchor_y)) / xi.slope_x;
    VectorXd x = L.pack(it);
    const auto feas = cone::check_feasible(spec, x, 1e-10);
    if (!(feas.min_cone_slack > kMinStartSlack) || !feas.feasible || !cone::in_interior(spec, x))
      return std::nullopt;
    return x;
  };

  for (double theta : {0.0, 1e-3, 1e-2, 0.1, 0.3, 0.6, 1.0}) {
    if (auto x = complete((1.0 - theta) * anchor.W + theta * W_inner)) return *x;
  }
  throw SolverFailure("no strictly feasible start for the SCA subproblem");
}

ScaRun sca_optimize(const ChannelMatrix& channel, const SystemParams& params,
                    const ScaConfig& config) {
  params.validate(channel.users());
  if (!(config.xi > 0.0)) throw InvalidInput("SCA tolerance xi must be positive");
  const ScaLayout L(channel.users(), channel.feeds());

  ScaRun run;
  run.iterates.push_back(
      config.start == ScaStart::kZeroForcing
          ? iterate_from_precoder(channel, params, zf_precode(channel, params, config.zf).W)
          : init_feasible(channel, params, config));
  auto& trace = run.solution.trace;
  auto& ee_trace = run.solution.ee_trace;

  for (int i = 1; i <= config.max_iterations; ++i) {
    const ScaIterate& current = run.iterates.back();
    auto spec = build_subproblem(channel, params, current);
    const VectorXd start = interior_start(channel, params, current, spec);
    auto report = cone::solve(spec, start, config.solver);
    if (report.status != cone::SolveStatus::kOptimal) {
      std::ostringstream msg;
      msg << "SCA subproblem " << i << " failed: " << cone::to_string(report.status) << " ("
          << report.message << ")";
      throw SolverFailure(msg.str(), trace);
    }
    ScaIterate next = L.unpack(report.x);
    if (next.t < current.t - config.decrease_tolerance) {
      std::ostringstream msg;
      msg << "SCA objective decreased from " << current.t << " to " << next.t
          << " at iteration " << i;
      throw SolverFailure(msg.str(), trace);
    }
    trace.push_back(std::sqrt(std::max(next.t, 0.0)));
    ee_trace.push_back(energy_efficiency(channel.H, next.W, params));
    const bool done = std::abs(next.t - current.t) <= config.xi;
    run.specs.push_back(std::move(spec));
    run.reports.push_back(std::move(report));
    run.iterates.push_back(std::move(next));
    if (done) {
      auto solution = evaluate_precoder(channel, run.iterates.back().W, params);
      solution.iterations = i;
      solution.trace = std::move(trace);
      solution.ee_trace = std::move(ee_trace);
      run.solution = std::move(solution);
      return run;
    }
  }
  throw SolverFailure("SCA did not converge within " + std::to_string(config.max_iterations) +
                          " iterations",
                      trace);
}

PrecodingSolution sca_precode(const ChannelMatrix& channel, const SystemParams& params,
                              const ScaConfig& config) {
  return sca_optimize(channel, params, config).solution;
}

}  // namespace eeprecode
