#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capsroute {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Violated call protocol, e.g. backward on a non-scalar or a spent tape.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

/// Frame files that are missing or cannot be decoded.
class IngestionError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint that cannot be read or does not match the architecture.
class VersionError : public Error {
 public:
  using Error::Error;
};

class SequenceTooShortError : public Error {
 public:
  SequenceTooShortError(std::size_t length, std::size_t required)
      : Error("sequence has " + std::to_string(length) + " frames, at least " +
              std::to_string(required) + " required"),
        length_(length) {}

  std::size_t length() const noexcept { return length_; }

 private:
  std::size_t length_;
};

/// Raised when a training loss becomes non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace capsroute
