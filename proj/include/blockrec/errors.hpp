#pragma once

#include <stdexcept>
#include <string>

namespace blockrec {

// Shape disagreement between tensors/operands.
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition.
struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Index outside the valid range.
struct index_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file or record.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace blockrec
