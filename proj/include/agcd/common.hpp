#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace agcd {

// Row-major so that one sample is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Index = std::size_t;
using IndexList = std::vector<Index>;
using Label = std::uint32_t;
using LabelList = std::vector<Label>;

// Base of everything thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent user configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, corrupt or inconsistent input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Worker cap from AGCD_THREADS; falls back to the hardware concurrency.
unsigned worker_threads();

}  // namespace agcd
