#pragma once

#include <stdexcept>
#include <string>

namespace vgpencr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SizeMismatch : Error { using Error::Error; };
struct EmptyGroup : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct NumericalFailure : Error { using Error::Error; };
struct DivergenceDetected : Error { using Error::Error; };
struct NegativeLambda : Error { using Error::Error; };
struct FoldTooSmall : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct OutOfDomain : Error { using Error::Error; };
struct EmptyObservation : Error { using Error::Error; };
struct GTooSmall : Error { using Error::Error; };
struct KTooSmall : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct InvalidArgument : Error { using Error::Error; };

}  // namespace vgpencr
