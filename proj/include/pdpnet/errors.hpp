#pragma once

#include <stdexcept>
#include <string>

namespace pdpnet {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PDPNET_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

PDPNET_DEFINE_ERROR(NonDivisibleGrid);
PDPNET_DEFINE_ERROR(InvalidWindow);
PDPNET_DEFINE_ERROR(ShapeMismatch);
PDPNET_DEFINE_ERROR(InfeasiblePlacement);
PDPNET_DEFINE_ERROR(MalformedManifest);
PDPNET_DEFINE_ERROR(MissingFile);
PDPNET_DEFINE_ERROR(IoError);
PDPNET_DEFINE_ERROR(ConfigInvalid);
PDPNET_DEFINE_ERROR(DataError);
PDPNET_DEFINE_ERROR(NonFiniteLoss);
PDPNET_DEFINE_ERROR(MalformedCsv);
PDPNET_DEFINE_ERROR(CheckpointError);

#undef PDPNET_DEFINE_ERROR

}  // namespace pdpnet
