#include "eeprecode/cone.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace eeprecode::cone {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Barrier value with optional gradient and Hessian accumulation.
class Barrier {
 public:
  Barrier(Index n, bool derivatives) : derivatives_(derivatives) {
    if (derivatives_) {
      grad_ = VectorXd::Zero(n);
      hess_ = MatrixXd::Zero(n, n);
    }
  }

  bool inside() const { return inside_; }
  double value() const { return value_; }
  const VectorXd& grad() const { return grad_; }
  const MatrixXd& hess() const { return hess_; }

  // Optional R'R per constraint, aligned with the constraint list.
  void set_grams(const std::vector<MatrixXd>* grams) { grams_ = grams; }

  void add(const Constraint& c, const VectorXd& x) {
    if (!inside_) return;
    gram_ = grams_ ? &(*grams_)[index_] : nullptr;
    ++index_;
    std::visit(overloaded{
                   [&](const LinearInequality& l) { linear(l.expr, x); },
                   [&](const LinearEquality&) {},
                   [&](const SecondOrderCone& s) { soc(s, x); },
                   [&](const RotatedCone& r) { rotated(r, x); },
                   [&](const ExpBound& e) { exp_bound(e, x); },
               },
               c.body);
  }

 private:
  void linear(const Affine& expr, const VectorXd& x) {
    const double s = expr(x);
    if (!(s > 0.0)) {
      inside_ = false;
      return;
    }
    value_ -= std::log(s);
    if (!derivatives_) return;
    grad_.noalias() -= expr.coeffs / s;
    hess_.noalias() += expr.coeffs * expr.coeffs.transpose() / (s * s);
  }

  // -log(p q - ||r||^2) with p, q affine and r = R x + r0. The lead-component
  // split keeps the cancellation in s^2 - u_0^2 out of floating point.
  void hyperbolic(const VectorXd& dp, double p, const VectorXd& dq, double q,
                  const Eigen::Ref<const MatrixXd>& R, const VectorXd& r) {
    const double g = p * q - r.squaredNorm();
    if (!(p > 0.0) || !(q > 0.0) || !(g > 0.0)) {
      inside_ = false;
      return;
    }
    value_ -= std::log(g);
    if (!derivatives_) return;
    VectorXd dg = q * dp + p * dq;
    if (R.rows() > 0) dg.noalias() -= 2.0 * R.transpose() * r;
    grad_.noalias() -= dg / g;
    hess_.noalias() += dg * dg.transpose() / (g * g);
    hess_.noalias() -= (dp * dq.transpose() + dq * dp.transpose()) / g;
    if (R.rows() == 0) return;
    if (gram_ && gram_->size() > 0)
      hess_.noalias() += (2.0 / g) * *gram_;
    else
      hess_.noalias() += (2.0 / g) * R.transpose() * R;
  }

  void soc(const SecondOrderCone& c, const VectorXd& x) {
    const VectorXd u = c.A * x + c.b;
    const double s = c.bound(x);
    const Index m = u.size();
    if (m == 0) {
      linear(c.bound, x);
      return;
    }
    const VectorXd dp = c.bound.coeffs - c.A.row(0).transpose();
    const VectorXd dq = c.bound.coeffs + c.A.row(0).transpose();
    const double p = dp.dot(x) + (c.bound.constant - c.b(0));
    const double q = dq.dot(x) + (c.bound.constant + c.b(0));
    if (!(s > 0.0)) {
      inside_ = false;
      return;
    }
    hyperbolic(dp, p, dq, q, c.A.bottomRows(m - 1), u.tail(m - 1));
  }

  void rotated(const RotatedCone& c, const VectorXd& x) {
    const VectorXd u = c.A * x + c.b;
    hyperbolic(c.first.coeffs, c.first(x), c.second.coeffs, c.second(x), c.A, u);
  }

  // -log(ln(bound) - exponent) - log(bound)
  void exp_bound(const ExpBound& c, const VectorXd& x) {
    const double gamma = c.bound(x);
    if (!(gamma > 0.0)) {
      inside_ = false;
      return;
    }
    const double h = std::log(gamma) - c.exponent(x);
    if (!(h > 0.0)) {
      inside_ = false;
      return;
    }
    value_ -= std::log(h) + std::log(gamma);
    if (!derivatives_) return;
    const VectorXd& dg = c.bound.coeffs;
    const VectorXd dh = dg / gamma - c.exponent.coeffs;
    grad_.noalias() -= dh / h + dg / gamma;
    hess_.noalias() += dh * dh.transpose() / (h * h);
    hess_.noalias() += dg * dg.transpose() * (1.0 / (gamma * gamma * h) + 1.0 / (gamma * gamma));
  }

  bool derivatives_;
  const std::vector<MatrixXd>* grams_ = nullptr;
  const MatrixXd* gram_ = nullptr;
  std::size_t index_ = 0;
  bool inside_ = true;
  double value_ = 0.0;
  VectorXd grad_;
  MatrixXd hess_;
};

Barrier evaluate(const SubproblemSpec& spec, const VectorXd& x, bool derivatives,
                 const std::vector<MatrixXd>* grams = nullptr) {
  Barrier barrier(spec.dimension(), derivatives);
  barrier.set_grams(grams);
  for (const auto& c : spec.constraints) barrier.add(c, x);
  return barrier;
}

double slack_of(const Constraint& c, const VectorXd& x) {
  return std::visit(
      overloaded{
          [&](const LinearInequality& l) { return l.expr(x); },
          [&](const LinearEquality& l) { return -std::abs(l.expr(x)); },
          [&](const SecondOrderCone& s) { return s.bound(x) - (s.A * x + s.b).norm(); },
          [&](const RotatedCone& r) {
            // ||u||^2 <= P Q, P, Q >= 0  <=>  ||[u, (P - Q)/2]|| <= (P + Q)/2
            const double P = r.first(x);
            const double Q = r.second(x);
            const VectorXd u = r.A * x + r.b;
            return 0.5 * (P + Q) - std::sqrt(u.squaredNorm() + 0.25 * (P - Q) * (P - Q));
          },
          [&](const ExpBound& e) { return e.bound(x) - std::exp(e.exponent(x)); },
      },
      c.body);
}

// Null space of the equality rows and the affine projector onto them.
struct EqualitySystem {
  MatrixXd E;
  VectorXd e;
  MatrixXd Z;  // orthonormal null-space basis, n x (n - rank)

  VectorXd project(const VectorXd& x) const {
    if (E.rows() == 0) return x;
    const VectorXd residual = E * x + e;
    return x - E.completeOrthogonalDecomposition().solve(residual);
  }
};

EqualitySystem equalities(const SubproblemSpec& spec) {
  const Index n = spec.dimension();
  EqualitySystem sys;
  std::vector<const Affine*> rows;
  for (const auto& c : spec.constraints)
    if (const auto* eq = std::get_if<LinearEquality>(&c.body)) rows.push_back(&eq->expr);
  sys.E.resize(static_cast<Index>(rows.size()), n);
  sys.e.resize(static_cast<Index>(rows.size()));
  for (Index i = 0; i < sys.E.rows(); ++i) {
    sys.E.row(i) = rows[static_cast<std::size_t>(i)]->coeffs.transpose();
    sys.e(i) = rows[static_cast<std::size_t>(i)]->constant;
  }
  if (sys.E.rows() == 0) {
    sys.Z = MatrixXd::Identity(n, n);
    return sys;
  }
  Eigen::JacobiSVD<MatrixXd> svd(sys.E, Eigen::ComputeFullV);
  svd.setThreshold(1e-12);
  const Index rank = svd.rank();
  sys.Z = svd.matrixV().rightCols(n - rank);
  return sys;
}

double reduced_stationarity(const SubproblemSpec& spec, const EqualitySystem& sys,
                            const Barrier& barrier, double tau) {
  const VectorXd g = -spec.objective + barrier.grad() / tau;
  return (sys.Z.transpose() * g).lpNorm<Eigen::Infinity>();
}

Affine restrict_affine(const Affine& a, const MatrixXd& Z, const VectorXd& x0) {
  return {Z.transpose() * a.coeffs, a(x0)};
}

// The spec over y with x = x0 + Z y; equalities are dropped.
SubproblemSpec restrict_to(const SubproblemSpec& spec, const MatrixXd& Z, const VectorXd& x0) {
  SubproblemSpec out;
  out.add_block("y", Z.cols());
  out.objective = Z.transpose() * spec.objective;
  for (const auto& c : spec.constraints) {
    std::visit(overloaded{
                   [&](const LinearInequality& l) {
                     out.constraints.push_back({c.name, LinearInequality{restrict_affine(l.expr, Z, x0)}});
                   },
                   [&](const LinearEquality&) {},
                   [&](const SecondOrderCone& q) {
                     out.constraints.push_back(
                         {c.name, SecondOrderCone{q.A * Z, q.A * x0 + q.b,
                                                  restrict_affine(q.bound, Z, x0)}});
                   },
                   [&](const RotatedCone& r) {
                     out.constraints.push_back(
                         {c.name, RotatedCone{r.A * Z, r.A * x0 + r.b, restrict_affine(r.first, Z, x0),
                                              restrict_affine(r.second, Z, x0)}});
                   },
                   [&](const ExpBound& e) {
                     out.constraints.push_back({c.name, ExpBound{restrict_affine(e.exponent, Z, x0),
                                                                 restrict_affine(e.bound, Z, x0)}});
                   },
               },
               c.body);
  }
  return out;
}

// R'R of the quadratic part of every cone; empty for other constraints.
std::vector<MatrixXd> cone_grams(const SubproblemSpec& spec) {
  std::vector<MatrixXd> grams;
  for (const auto& c : spec.constraints) {
    MatrixXd g;
    if (const auto* q = std::get_if<SecondOrderCone>(&c.body); q && q->A.rows() > 1) {
      const auto R = q->A.bottomRows(q->A.rows() - 1);
      g = R.transpose() * R;
    } else if (const auto* r = std::get_if<RotatedCone>(&c.body); r && r->A.rows() > 0) {
      g = r->A.transpose() * r->A;
    }
    grams.push_back(std::move(g));
  }
  return grams;
}

}  // namespace

const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kLinearInequality: return "linear-inequality";
    case ConstraintKind::kLinearEquality: return "linear-equality";
    case ConstraintKind::kSoc: return "soc";
    case ConstraintKind::kRotatedSoc: return "rotated-soc";
    case ConstraintKind::kLogExp: return "log-exp";
  }
  return "unknown";
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kMaxIterations: return "max-iter";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kNumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

Index SubproblemSpec::add_block(const std::string& name, Index size) {
  const Index offset = dimension();
  blocks.push_back({name, offset, size});
  objective.conservativeResize(offset + size);
  objective.tail(size).setZero();
  return offset;
}

const VariableBlock& SubproblemSpec::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw InvalidInput("unknown variable block '" + name + "'");
}

Index SubproblemSpec::index(const std::string& name, Index i) const {
  const auto& b = block(name);
  if (i < 0 || i >= b.size) throw InvalidInput("index out of range in block '" + name + "'");
  return b.offset + i;
}

Index SubproblemSpec::count(ConstraintKind kind) const {
  Index total = 0;
  for (const auto& c : constraints) total += c.kind() == kind ? 1 : 0;
  return total;
}

void SubproblemSpec::validate() const {
  const Index n = dimension();
  Index covered = 0;
  for (const auto& b : blocks) {
    if (b.offset != covered || b.size < 0) throw InvalidInput("variable blocks must tile x");
    covered += b.size;
  }
  if (covered != n) throw InvalidInput("variable blocks do not cover the objective");
  auto check = [&](const Affine& a, const std::string& name) {
    if (a.coeffs.size() != n)
      throw InvalidInput("constraint '" + name + "' references undeclared variables");
  };
  for (const auto& c : constraints) {
    std::visit(overloaded{
                   [&](const LinearInequality& l) { check(l.expr, c.name); },
                   [&](const LinearEquality& l) { check(l.expr, c.name); },
                   [&](const SecondOrderCone& s) {
                     check(s.bound, c.name);
                     if (s.A.cols() != n || s.A.rows() != s.b.size())
                       throw InvalidInput("cone '" + c.name + "' has mismatched rows");
                   },
                   [&](const RotatedCone& r) {
                     check(r.first, c.name);
                     check(r.second, c.name);
                     if (r.A.cols() != n || r.A.rows() != r.b.size())
                       throw InvalidInput("cone '" + c.name + "' has mismatched rows");
                   },
                   [&](const ExpBound& e) {
                     check(e.exponent, c.name);
                     check(e.bound, c.name);
                   },
               },
               c.body);
  }
}

double barrier_degree(const SubproblemSpec& spec) {
  double m = 0.0;
  for (const auto& c : spec.constraints) {
    switch (c.kind()) {
      case ConstraintKind::kLinearInequality: m += 1.0; break;
      case ConstraintKind::kLinearEquality: break;
      default: m += 2.0; break;
    }
  }
  return m;
}

double final_barrier_weight(const SubproblemSpec& spec, const SolverOptions& options) {
  const double m = barrier_degree(spec);
  double tau = options.barrier_start;
  for (int stage = 1; stage < options.max_stages && m / tau > options.optimality_tol; ++stage)
    tau *= options.barrier_growth;
  return tau;
}

FeasibilityReport check_feasible(const SubproblemSpec& spec, const VectorXd& point,
                                 double tol) {
  spec.validate();
  if (point.size() != spec.dimension()) throw InvalidInput("point has wrong dimension");
  FeasibilityReport report;
  report.slack.resize(static_cast<Index>(spec.constraints.size()));
  report.min_cone_slack = kInf;
  report.min_slack = kInf;
  for (std::size_t i = 0; i < spec.constraints.size(); ++i) {
    const auto& c = spec.constraints[i];
    const double s = slack_of(c, point);
    report.slack(static_cast<Index>(i)) = s;
    report.min_slack = std::min(report.min_slack, s);
    if (c.kind() != ConstraintKind::kLinearEquality)
      report.min_cone_slack = std::min(report.min_cone_slack, s);
  }
  report.feasible = (report.slack.array() >= -tol).all() && report.slack.allFinite();
  return report;
}

bool in_interior(const SubproblemSpec& spec, const VectorXd& point) {
  spec.validate();
  if (point.size() != spec.dimension()) throw InvalidInput("point has wrong dimension");
  return evaluate(spec, equalities(spec).project(point), false).inside();
}

KktReport kkt_residual(const SubproblemSpec& spec, const VectorXd& point,
                       double barrier_weight) {
  spec.validate();
  if (point.size() != spec.dimension()) throw InvalidInput("point has wrong dimension");
  if (!(barrier_weight > 0.0)) throw InvalidInput("barrier weight must be positive");
  KktReport report;
  report.primal.resize(static_cast<Index>(spec.constraints.size()));
  for (std::size_t i = 0; i < spec.constraints.size(); ++i) {
    const double s = slack_of(spec.constraints[i], point);
    report.primal(static_cast<Index>(i)) = std::isfinite(s) ? std::max(0.0, -s) : kInf;
  }
  report.max_primal = report.primal.size() ? report.primal.maxCoeff() : 0.0;
  report.barrier_weight = barrier_weight;
  report.gap = barrier_degree(spec) / barrier_weight;
  const Barrier barrier = evaluate(spec, point, true);
  report.stationarity = barrier.inside()
                            ? reduced_stationarity(spec, equalities(spec), barrier,
                                                   barrier_weight)
                            : kInf;
  return report;
}

KktReport kkt_residual(const SubproblemSpec& spec, const VectorXd& point) {
  return kkt_residual(spec, point, final_barrier_weight(spec));
}

SolverReport solve(const SubproblemSpec& spec, const VectorXd& start,
                   const SolverOptions& options) {
  spec.validate();
  if (start.size() != spec.dimension()) throw InvalidInput("start point has wrong dimension");
  SolverReport report;
  const EqualitySystem sys = equalities(spec);
  const VectorXd x0 = sys.project(start);
  report.x = x0;
  report.objective = spec.objective.dot(x0);

  if (!evaluate(spec, x0, false).inside()) {
    report.status = SolveStatus::kInfeasible;
    report.message = "start point is not strictly feasible";
    report.kkt = kkt_residual(spec, x0, options.barrier_start);
    return report;
  }

  // Work in y with x = x0 + Z y, so Newton systems are unconstrained.
  const SubproblemSpec reduced = restrict_to(spec, sys.Z, x0);
  const std::vector<MatrixXd> grams = cone_grams(reduced);
  const double m = barrier_degree(spec);
  const Index dim = reduced.dimension();
  const EqualitySystem free_sys{MatrixXd(0, dim), VectorXd(0), MatrixXd::Identity(dim, dim)};
  // Phi_tau(y) = -tau objective'y + barrier(y)
  auto merit = [&](const VectorXd& point, double tau) {
    const Barrier b = evaluate(reduced, point, false);
    return b.inside() ? -tau * reduced.objective.dot(point) + b.value() : kInf;
  };

  VectorXd y = VectorXd::Zero(dim);
  double tau = options.barrier_start;
  bool centred = false;
  for (int stage = 0; stage < options.max_stages; ++stage) {
    const bool last = m / tau <= options.optimality_tol;
    centred = false;
    double previous_stationarity = kInf;
    double best_stationarity = kInf;
    VectorXd best_y;
    for (int it = 0; it < options.max_newton_per_stage; ++it) {
      const Barrier b = evaluate(reduced, y, true, &grams);
      const VectorXd grad = -tau * reduced.objective + b.grad();
      MatrixXd hess = b.hess();
      Eigen::LDLT<MatrixXd> ldlt(hess);
      VectorXd dy = ldlt.solve(-grad);
      // Late stages are nearly singular; refinement recovers the digits
      // that set the stationarity floor.
      for (int r = 0; r < 2; ++r) dy += ldlt.solve(-grad - hess * dy);
      if (ldlt.info() != Eigen::Success || !dy.allFinite() || grad.dot(dy) >= 0.0) {
        hess.diagonal().array() += 1e-12 * std::max(1.0, hess.diagonal().maxCoeff());
        dy = hess.llt().solve(-grad);
      }
      const double decrement = -grad.dot(dy);
      if (!std::isfinite(decrement) || decrement < 0.0) {
        report.status = SolveStatus::kNumericalFailure;
        report.message = "Newton system produced a non-descent direction";
        report.x = x0 + sys.Z * y;
        report.kkt = kkt_residual(spec, report.x, tau);
        return report;
      }
      // On the last stage also polish stationarity until it stops improving.
      bool stationary = true;
      if (last) {
        const double r = reduced_stationarity(reduced, free_sys, b, tau);
        stationary = r <= 0.1 * options.optimality_tol || r >= 0.5 * previous_stationarity;
        previous_stationarity = r;
        if (r < best_stationarity) {
          best_stationarity = r;
          best_y = y;
        }
      }
      if (0.5 * decrement <= options.newton_tol && stationary) {
        centred = true;
        break;
      }
      const double f0 = -tau * reduced.objective.dot(y) + b.value();
      const double slope = grad.dot(dy);
      double step = 1.0;
      double f1 = merit(y + dy, tau);
      if (decrement < 0.0625 && std::isfinite(f1)) {
        // Quadratic region: the full step is safe even when the merit
        // change is below its rounding.
        ++report.iterations;
        y += dy;
        continue;
      }
      int backtracks = 0;
      while (!(f1 <= f0 + 0.01 * step * slope) && backtracks < 80) {
        step *= 0.5;
        f1 = merit(y + step * dy, tau);
        ++backtracks;
      }
      ++report.iterations;
      if (!(f1 <= f0 + 0.01 * step * slope)) {
        // No further decrease representable: accept the point as centred.
        if (!std::isfinite(f1) || f1 > f0) {
          centred = 0.5 * decrement <= 1e-6;
          break;
        }
      }
      y += step * dy;
    }
    // Steps at rounding level can undo the polish; keep the best point.
    if (best_y.size()) y = best_y;
    ++report.stages;
    report.stage_objectives.push_back(spec.objective.dot(x0 + sys.Z * y));
    if (last) break;
    tau *= options.barrier_growth;
  }

  report.x = x0 + sys.Z * y;
  report.objective = spec.objective.dot(report.x);
  report.kkt = kkt_residual(spec, report.x, tau);
  // Stationarity where the iterate lives; mapping back to x costs digits
  // on nearly active rows.
  const Barrier final_barrier = evaluate(reduced, y, true, &grams);
  if (final_barrier.inside())
    report.kkt.stationarity = reduced_stationarity(reduced, free_sys, final_barrier, tau);
  const bool converged = m / tau <= options.optimality_tol;
  if (!converged) {
    report.status = SolveStatus::kMaxIterations;
    report.message = "barrier stage limit reached";
  } else if (report.kkt.max_primal <= options.feasibility_tol &&
             report.kkt.stationarity <= options.optimality_tol) {
    report.status = SolveStatus::kOptimal;
  } else if (!centred) {
    report.status = SolveStatus::kMaxIterations;
    report.message = "final centering did not converge";
  } else {
    report.status = SolveStatus::kNumericalFailure;
    report.message = "KKT residuals above tolerance at the final stage";
  }
  return report;
}

std::string spec_to_json(const SubproblemSpec& spec) {
  using nlohmann::json;
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto affine = [&](const Affine& a) { return json{{"coeffs", vec(a.coeffs)}, {"constant", a.constant}}; };
  auto mat = [&](const MatrixXd& A) {
    json rows = json::array();
    for (Index i = 0; i < A.rows(); ++i) rows.push_back(vec(A.row(i).transpose()));
    return rows;
  };
  json doc;
  doc["dimension"] = spec.dimension();
  doc["variables"] = json::array();
  for (const auto& b : spec.blocks)
    doc["variables"].push_back({{"name", b.name}, {"offset", b.offset}, {"size", b.size}});
  doc["maximize"] = vec(spec.objective);
  doc["constraints"] = json::array();
  for (const auto& c : spec.constraints) {
    json item{{"name", c.name}, {"tag", to_string(c.kind())}};
    std::visit(overloaded{
                   [&](const LinearInequality& l) { item["expr"] = affine(l.expr); },
                   [&](const LinearEquality& l) { item["expr"] = affine(l.expr); },
                   [&](const SecondOrderCone& s) {
                     item["A"] = mat(s.A);
                     item["b"] = vec(s.b);
                     item["bound"] = affine(s.bound);
                   },
                   [&](const RotatedCone& r) {
                     item["A"] = mat(r.A);
                     item["b"] = vec(r.b);
                     item["first"] = affine(r.first);
                     item["second"] = affine(r.second);
                   },
                   [&](const ExpBound& e) {
                     item["exponent"] = affine(e.exponent);
                     item["bound"] = affine(e.bound);
                   },
               },
               c.body);
    doc["constraints"].push_back(std::move(item));
  }
  return doc.dump();
}

}  // namespace eeprecode::cone
