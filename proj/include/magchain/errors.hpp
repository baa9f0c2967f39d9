#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>

namespace magchain {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed or missing configuration input. `key_path` names the offending key.
class ConfigError : public Error {
public:
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path.empty() ? what : key_path + ": " + what), key_path_(std::move(key_path)) {}
  const std::string& key_path() const noexcept { return key_path_; }

private:
  std::string key_path_;
};

// A parsed value violates a type invariant.
class ValidationError : public Error {
public:
  ValidationError(std::string invariant, const std::string& what)
      : Error(what), invariant_(std::move(invariant)) {}
  const std::string& invariant() const noexcept { return invariant_; }

private:
  std::string invariant_;
};

class DomainError : public Error {
public:
  using Error::Error;
};

// Coincident dipoles.
class SingularityError : public Error {
public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
public:
  using Error::Error;
};

// Root solve did not reach tolerance. Carries the best iterate seen.
class SolverFailure : public Error {
public:
  SolverFailure(const std::string& what, Eigen::VectorXd best_iterate, double residual_norm)
      : Error(what), best_(std::move(best_iterate)), residual_norm_(residual_norm) {}
  const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  double residual_norm() const noexcept { return residual_norm_; }

private:
  Eigen::VectorXd best_;
  double residual_norm_;
};

// Stiffness design step `n` failed.
class DesignFailure : public Error {
public:
  DesignFailure(int segment, const std::string& what)
      : Error("design step n=" + std::to_string(segment) + ": " + what), segment_(segment) {}
  int segment() const noexcept { return segment_; }

private:
  int segment_;
};

}  // namespace magchain
