#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eeprecode {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: dimension mismatch, bad parameter, unparsable file.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// The QoS floors cannot be met within the power budget.
class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, std::vector<int> users)
      : Error(what), users_(std::move(users)) {}

  // Users whose floors contribute to the violation (largest floor first).
  const std::vector<int>& users() const { return users_; }

 private:
  std::vector<int> users_;
};

// Numerical breakdown or iteration cap. Carries the objective trace so far.
class SolverFailure : public Error {
 public:
  explicit SolverFailure(const std::string& what, std::vector<double> trace = {})
      : Error(what), trace_(std::move(trace)) {}

  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

class IllConditioned : public SolverFailure {
 public:
  IllConditioned(const std::string& what, double condition)
      : SolverFailure(what), condition_(condition) {}

  double condition() const { return condition_; }

 private:
  double condition_;
};

}  // namespace eeprecode
