#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace emasketch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error categories map one-to-one onto CLI exit codes (see tools/emasketch.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

std::string shape_str(const Matrix& m);

void require_shape(const Matrix& m, Index rows, Index cols, const char* what);

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace emasketch
