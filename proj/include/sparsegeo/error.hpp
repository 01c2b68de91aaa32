#pragma once

#include <stdexcept>
#include <string>

namespace sparsegeo {

// Root of every error thrown by the library. Subclasses map one-to-one onto the
// failure categories callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SPARSEGEO_DEFINE_ERROR(Name)          \
  class Name : public Error {                 \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Error(#Name ": " + what) {}         \
  }

SPARSEGEO_DEFINE_ERROR(IoError);
SPARSEGEO_DEFINE_ERROR(FormatError);
SPARSEGEO_DEFINE_ERROR(UnsupportedModel);
SPARSEGEO_DEFINE_ERROR(CorruptModel);
SPARSEGEO_DEFINE_ERROR(ShapeError);
SPARSEGEO_DEFINE_ERROR(DegenerateFit);
SPARSEGEO_DEFINE_ERROR(NonPositiveScale);
SPARSEGEO_DEFINE_ERROR(SegmenterError);
SPARSEGEO_DEFINE_ERROR(MissingInput);
SPARSEGEO_DEFINE_ERROR(InsufficientViews);
SPARSEGEO_DEFINE_ERROR(DegenerateLayout);
SPARSEGEO_DEFINE_ERROR(NameMismatch);
SPARSEGEO_DEFINE_ERROR(TooSmall);
SPARSEGEO_DEFINE_ERROR(OutOfBounds);
SPARSEGEO_DEFINE_ERROR(ConfigError);

#undef SPARSEGEO_DEFINE_ERROR

}  // namespace sparsegeo
