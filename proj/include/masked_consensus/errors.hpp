#ifndef MASKED_CONSENSUS_ERRORS_HPP
#define MASKED_CONSENSUS_ERRORS_HPP

#include <stdexcept>

namespace mc {

// Malformed scenario input (schema, ranges, unknown keys). CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stability-guard rejection, divergence, or a state leaving its physical
// range during integration. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mc

#endif
