#pragma once

#include <stdexcept>
#include <string>

namespace bpmf {

/// Base class for every fatal error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define BPMF_DEFINE_ERROR(Name)              \
  class Name : public Error {                \
   public:                                   \
    explicit Name(const std::string& what)   \
        : Error(#Name ": " + what) {}        \
  }

BPMF_DEFINE_ERROR(EmptyBelief);
BPMF_DEFINE_ERROR(InvalidPilotConfig);
BPMF_DEFINE_ERROR(PilotViolation);
BPMF_DEFINE_ERROR(LengthMismatch);
BPMF_DEFINE_ERROR(ZeroChannelBelief);
BPMF_DEFINE_ERROR(ZeroSymbolBelief);
BPMF_DEFINE_ERROR(SingularTapSystem);
BPMF_DEFINE_ERROR(ConfigParse);
BPMF_DEFINE_ERROR(ConfigInvalid);
BPMF_DEFINE_ERROR(MalformedResults);
BPMF_DEFINE_ERROR(IoError);

#undef BPMF_DEFINE_ERROR

}  // namespace bpmf
