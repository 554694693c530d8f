#pragma once

#include <stdexcept>
#include <string>

namespace kaczmarz {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Errors caused by inconsistent numeric input (bad matrices, degenerate
/// blocks, spectra that cannot be realized). The CLI maps these to exit 3.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Errors caused by malformed configuration or files. The CLI maps these to exit 2.
class InputError : public Error {
public:
    using Error::Error;
};

#define KACZMARZ_DEFINE_ERROR(Name, Base)  \
    class Name : public Base {             \
    public:                                \
        using Base::Base;                  \
    }

KACZMARZ_DEFINE_ERROR(InvalidMatrix, NumericError);
KACZMARZ_DEFINE_ERROR(DimError, NumericError);
KACZMARZ_DEFINE_ERROR(SubspaceError, NumericError);
KACZMARZ_DEFINE_ERROR(CoverageError, NumericError);
KACZMARZ_DEFINE_ERROR(DegenerateError, NumericError);
KACZMARZ_DEFINE_ERROR(ZeroRowError, NumericError);
KACZMARZ_DEFINE_ERROR(ZeroBlockError, NumericError);
KACZMARZ_DEFINE_ERROR(SpectrumError, NumericError);
KACZMARZ_DEFINE_ERROR(SampleError, NumericError);
KACZMARZ_DEFINE_ERROR(SupportTooLarge, NumericError);

KACZMARZ_DEFINE_ERROR(PartitionError, InputError);
KACZMARZ_DEFINE_ERROR(SchemeKindError, InputError);
KACZMARZ_DEFINE_ERROR(ParamError, InputError);
KACZMARZ_DEFINE_ERROR(ParseError, InputError);
KACZMARZ_DEFINE_ERROR(UnsupportedFormat, InputError);
KACZMARZ_DEFINE_ERROR(ConfigError, InputError);
KACZMARZ_DEFINE_ERROR(IoError, InputError);

#undef KACZMARZ_DEFINE_ERROR

}  // namespace kaczmarz
