#pragma once

#include <stdexcept>
#include <string>

namespace hypermarg {

/// Raised when a computation produced or met values it cannot continue with:
/// an indefinite matrix, a non-finite iterate, a negative Ritz value.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using InvalidArgument = std::invalid_argument;

}  // namespace hypermarg
