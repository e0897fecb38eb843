#pragma once

#include <stdexcept>
#include <string>

// Error taxonomy shared by all modules. Every condition a caller can
// reasonably recover from gets its own type so tests can catch it by name.

namespace clmrkit {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define CLMRKIT_DEFINE_ERROR(Name)                                    \
    class Name : public Error {                                       \
    public:                                                           \
        explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
    }

// audio_io
CLMRKIT_DEFINE_ERROR(MalformedWav);
CLMRKIT_DEFINE_ERROR(UnsupportedEncoding);
CLMRKIT_DEFINE_ERROR(InvalidRate);
CLMRKIT_DEFINE_ERROR(MixedRates);

// augment
CLMRKIT_DEFINE_ERROR(TooShort);
CLMRKIT_DEFINE_ERROR(OutOfRange);

// autodiff / model
CLMRKIT_DEFINE_ERROR(ShapeMismatch);
CLMRKIT_DEFINE_ERROR(NonScalarLoss);
CLMRKIT_DEFINE_ERROR(DegenerateBatch);
CLMRKIT_DEFINE_ERROR(InvalidLayer);

// contrastive
CLMRKIT_DEFINE_ERROR(ZeroVector);
CLMRKIT_DEFINE_ERROR(BatchTooSmall);
CLMRKIT_DEFINE_ERROR(InsufficientSongs);

// eval
CLMRKIT_DEFINE_ERROR(SingleClass);
CLMRKIT_DEFINE_ERROR(NoPositives);
CLMRKIT_DEFINE_ERROR(EmptyClip);
CLMRKIT_DEFINE_ERROR(EmptySplit);
CLMRKIT_DEFINE_ERROR(EmptySubset);

// datasets
CLMRKIT_DEFINE_ERROR(MissingFile);
CLMRKIT_DEFINE_ERROR(BadSplit);
CLMRKIT_DEFINE_ERROR(DuplicateId);
CLMRKIT_DEFINE_ERROR(TooFewTags);

#undef CLMRKIT_DEFINE_ERROR

} // namespace clmrkit
