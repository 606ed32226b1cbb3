#pragma once

#include <stdexcept>
#include <string>

namespace svcam {

enum class ErrorKind {
  Schema,
  Parse,
  EmptyData,
  InvalidData,
  Domain,
  KnotPlacement,
  SingularFit,
  PilotSingular,
  Selection,
  Extrapolation,
  Degenerate,
  Unavailable,
  Argument,
  Io,
};

const char* to_string(ErrorKind kind);

// Every library failure is reported through this type; the CLI maps the
// kind onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// A local fit without enough support at its target.
class SingularFitError : public Error {
 public:
  SingularFitError(double target, const std::string& what)
      : Error(ErrorKind::SingularFit, what), target_(target) {}

  double target() const noexcept { return target_; }

 private:
  double target_;
};

}  // namespace svcam
