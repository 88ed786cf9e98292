#pragma once

#include <stdexcept>

namespace spop {

// Raised when a run would exceed its configured compute budget.
struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spop
