#pragma once

#include <stdexcept>
#include <string>

namespace ising {

/// Raised when an exact computation would exceed its enumeration budget.
/// Exact routines refuse instead of truncating.
class BudgetExceeded : public std::runtime_error {
 public:
  explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ising
