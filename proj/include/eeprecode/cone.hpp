#pragma once

#include <string>
#include <variant>
#include <vector>

#include "eeprecode/model.hpp"

namespace eeprecode::cone {

/// a' x + b over the full decision vector.
struct Affine {
  VectorXd coeffs;
  double constant = 0.0;

  static Affine zero(Index dimension) { return {VectorXd::Zero(dimension), 0.0}; }
  double operator()(const VectorXd& x) const { return coeffs.dot(x) + constant; }
};

/// expr >= 0
struct LinearInequality {
  Affine expr;
};

/// expr == 0
struct LinearEquality {
  Affine expr;
};

/// ||A x + b||_2 <= bound(x)
struct SecondOrderCone {
  MatrixXd A;
  VectorXd b;
  Affine bound;
};

/// ||A x + b||_2^2 <= first(x) * second(x), first, second >= 0
struct RotatedCone {
  MatrixXd A;
  VectorXd b;
  Affine first;
  Affine second;
};

/// exp(exponent(x)) <= bound(x), handled through ln(bound) - exponent >= 0.
struct ExpBound {
  Affine exponent;
  Affine bound;
};

enum class ConstraintKind { kLinearInequality, kLinearEquality, kSoc, kRotatedSoc, kLogExp };

const char* to_string(ConstraintKind kind);

struct Constraint {
  std::string name;
  std::variant<LinearInequality, LinearEquality, SecondOrderCone, RotatedCone, ExpBound> body;

  ConstraintKind kind() const { return static_cast<ConstraintKind>(body.index()); }
};

/// A named, contiguous slice of the decision vector.
struct VariableBlock {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

/// maximize objective' x subject to the constraint list.
struct SubproblemSpec {
  std::vector<VariableBlock> blocks;
  VectorXd objective;
  std::vector<Constraint> constraints;

  Index dimension() const { return objective.size(); }

  /// Appends a block and grows the objective with zeros.
  Index add_block(const std::string& name, Index size);
  const VariableBlock& block(const std::string& name) const;
  Index index(const std::string& name, Index i = 0) const;

  Index count(ConstraintKind kind) const;

  /// Throws InvalidInput on dimension mismatches.
  void validate() const;
};

/// Log-barrier degree: 1 per linear inequality, 2 per cone or exp bound.
double barrier_degree(const SubproblemSpec& spec);

struct SolverOptions {
  double feasibility_tol = 1e-8;
  double optimality_tol = 1e-7;
  int max_newton_per_stage = 50;
  int max_stages = 30;
  double barrier_start = 1.0;
  double barrier_growth = 10.0;
  double newton_tol = 1e-12;  // stop centering when lambda^2 / 2 falls below
};

enum class SolveStatus { kOptimal, kMaxIterations, kInfeasible, kNumericalFailure };

const char* to_string(SolveStatus status);

struct KktReport {
  VectorXd primal;  // violation per constraint, >= 0
  double max_primal = 0.0;
  // ||Z'(-objective + grad(barrier)/tau)||_inf; solve() evaluates it in y
  double stationarity = 0.0;
  double gap = 0.0;  // barrier_degree / tau
  double barrier_weight = 0.0;

  double worst() const { return std::max({max_primal, stationarity, gap}); }
};

struct SolverReport {
  VectorXd x;
  double objective = 0.0;
  SolveStatus status = SolveStatus::kNumericalFailure;
  KktReport kkt;
  int iterations = 0;  // Newton steps over all stages
  int stages = 0;
  std::vector<double> stage_objectives;
  std::string message;
};

/// Barrier path-following from a strictly feasible start. Equalities are
/// eliminated through a null-space parameterization after projecting the
/// start onto them. Returns kInfeasible if the projected start is not
/// strictly inside every cone.
SolverReport solve(const SubproblemSpec& spec, const VectorXd& start,
                   const SolverOptions& options = {});

/// Barrier weight reached by solve() under `options`: the first
/// barrier_start * growth^k with degree / tau <= optimality_tol.
double final_barrier_weight(const SubproblemSpec& spec, const SolverOptions& options = {});

/// Primal violations and stationarity with multipliers recovered from the
/// barrier at weight `barrier_weight`. Stationarity is +inf outside the
/// interior.
KktReport kkt_residual(const SubproblemSpec& spec, const VectorXd& point,
                       double barrier_weight);
KktReport kkt_residual(const SubproblemSpec& spec, const VectorXd& point);

struct FeasibilityReport {
  bool feasible = false;
  VectorXd slack;  // per constraint; negative means violated (equalities: -|residual|)
  double min_cone_slack = 0.0;
  double min_slack = 0.0;
};

FeasibilityReport check_feasible(const SubproblemSpec& spec, const VectorXd& point,
                                 double tol);

/// True when the point, projected onto the equalities, lies strictly inside
/// every inequality and cone (the barrier domain).
bool in_interior(const SubproblemSpec& spec, const VectorXd& point);

/// Debug description: variable blocks, objective, and per-constraint tag and
/// coefficient arrays.
std::string spec_to_json(const SubproblemSpec& spec);

}  // namespace eeprecode::cone
