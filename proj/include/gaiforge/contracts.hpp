#pragma once

#include <stdexcept>
#include <string>

namespace gaiforge {

/// Thrown when a documented precondition or invariant is violated.
/// The message names the violated contract.
class ContractViolation : public std::runtime_error {
 public:
  explicit ContractViolation(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace gaiforge
