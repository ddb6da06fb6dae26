#pragma once

#include <stdexcept>
#include <string>

namespace wsiseg {

// Every failure raised by the library derives from Error so callers can catch
// one type at stage boundaries and still dispatch on the category.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define WSISEG_DEFINE_ERROR(Name)                 \
    class Name : public Error {                   \
    public:                                       \
        using Error::Error;                       \
    }

WSISEG_DEFINE_ERROR(InputError);        // unreadable or malformed input
WSISEG_DEFINE_ERROR(FormatError);       // readable but unsupported pixel format
WSISEG_DEFINE_ERROR(BoundsError);       // index or region outside valid range
WSISEG_DEFINE_ERROR(SizeError);         // raster too small for the requested operation
WSISEG_DEFINE_ERROR(ConsistencyError);  // inputs that do not belong together
WSISEG_DEFINE_ERROR(ConfigError);       // invalid parameter combination
WSISEG_DEFINE_ERROR(ProtocolError);     // malformed message from an external backend
WSISEG_DEFINE_ERROR(CapabilityError);   // backend lacks the requested operation
WSISEG_DEFINE_ERROR(NumericError);      // non-finite values where finite ones are required
WSISEG_DEFINE_ERROR(DegenerateError);   // statistic or objective undefined for the input
WSISEG_DEFINE_ERROR(PlacementError);    // phantom geometry could not be realised

#undef WSISEG_DEFINE_ERROR

}  // namespace wsiseg
