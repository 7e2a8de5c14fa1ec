#pragma once

#include <stdexcept>
#include <string>

namespace hspsim {

/// Invalid or inconsistent run configuration; carries the offending field
/// path when raised by the config parser. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Photon-number enumeration truncated with too much probability mass
/// outside the lattice. A configuration problem (raise the cutoff).
class CutoffTooSmall : public ConfigError {
 public:
  explicit CutoffTooSmall(const std::string& what) : ConfigError(what) {}
};

/// Filesystem failure while reading inputs or writing outputs. CLI exit
/// code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// An estimator's preconditions are not met by the data (zero heralds, zero
/// coincidence denominators, non-thermal g2 for the mode-number relation).
/// CLI exit code 4.
class EstimatorUndefined : public std::runtime_error {
 public:
  explicit EstimatorUndefined(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace hspsim
