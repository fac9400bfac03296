#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace wyf {

using Field = Eigen::VectorXd;
using Index = Eigen::Index;

// Bad input or configuration. The CLI maps it to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A computation that could not reach its tolerance. The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

inline double sup_norm(const Field& f) { return f.size() ? f.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace wyf
