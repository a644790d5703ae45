#pragma once

#include <stdexcept>
#include <string>

namespace veb {

// Bad user-supplied configuration (sizes, names, ranges). CLI exit code 1.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Evaluation point outside a prior's support.
struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parameter on a boundary where the requested derivative is undefined.
struct boundary_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Quadrature, linear-algebra, or iteration failure. CLI exit code 2.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated an API precondition (unnormalized q, empty draws, ...).
struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problem size outside the supported range (e.g. 2^p enumeration).
struct scale_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace veb
