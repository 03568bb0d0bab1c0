#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <type_traits>
#include <string>

namespace nfl {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;

/// Blocks template-argument deduction so Eigen expressions convert at call
/// sites (the owning object already fixes Scalar).
template <typename T>
using Arg = std::type_identity_t<T>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidDimensions : Error {
  using Error::Error;
};

struct DataTooShort : Error {
  using Error::Error;
};

struct Diverged : Error {
  explicit Diverged(Index step_)
      : Error("non-finite state at step " + std::to_string(step_)), step(step_) {}
  Index step;
};

struct MalformedN : Error {
  using Error::Error;
};

struct InvalidInterval : Error {
  using Error::Error;
};

struct InvalidMultiplier : Error {
  using Error::Error;
};

struct SingularTransform : Error {
  using Error::Error;
};

struct NumericalFailure : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ExpertSynthesisFailed : Error {
  using Error::Error;
};

struct NotPersistentlyExciting : Error {
  using Error::Error;
};

struct IllConditionedCertificate : Error {
  using Error::Error;
};

struct SolverFailure : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace nfl
