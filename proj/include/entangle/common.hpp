#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace entangle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of inputs disagree (wrong input length, wrong matrix size, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must have full column rank does not.
class RankDeficiencyError : public Error {
 public:
  explicit RankDeficiencyError(const std::string& what,
                               std::vector<int> indices = {})
      : Error(what), indices_(std::move(indices)) {}
  const std::vector<int>& indices() const { return indices_; }

 private:
  std::vector<int> indices_;
};

/// NaN/Inf values, divergence, or an empty signal where one is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Error raised inside a pipeline stage, tagged with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace entangle
