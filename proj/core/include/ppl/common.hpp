#pragma once

#include <stdexcept>
#include <string>

namespace ppl {

// Logit/label index convention, fixed project-wide: index 0 is the real
// class, index 1 the synthetic class. Everything that touches logits or
// labels goes through these constants.
inline constexpr int kLabelReal = 0;
inline constexpr int kLabelSynthetic = 1;
static_assert(kLabelReal == 0 && kLabelSynthetic == 1);

// Patch-label sentinel for tokens that take part in neither side of the
// contrastive loss (e.g. zero-filled dropout patches).
inline constexpr int kPatchExcluded = -1;

// Thrown on contract violations (bad shapes, out-of-range arguments).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a numeric computation produced NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on malformed files (checkpoints, manifests, configs).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on filesystem failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ppl
