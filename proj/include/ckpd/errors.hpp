// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ckpd {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied something malformed: wrong shapes, bad config, unknown ids.
/// The CLI maps these to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

/// A numerical routine could not produce a valid result. CLI exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

#define CKPD_DEFINE_ERROR(Name, Base)                                                              \
    class Name : public Base {                                                                     \
    public:                                                                                        \
        using Base::Base;                                                                          \
    }

CKPD_DEFINE_ERROR(ShapeError, UsageError);
CKPD_DEFINE_ERROR(NotSymmetric, UsageError);
CKPD_DEFINE_ERROR(FormatError, UsageError);
CKPD_DEFINE_ERROR(ConfigError, UsageError);
CKPD_DEFINE_ERROR(DuplicateClass, UsageError);
CKPD_DEFINE_ERROR(EmptyClass, UsageError);
CKPD_DEFINE_ERROR(EmptyBuffer, UsageError);
CKPD_DEFINE_ERROR(RankTooLarge, UsageError);
CKPD_DEFINE_ERROR(InvalidRank, UsageError);
CKPD_DEFINE_ERROR(TooManyLayers, UsageError);
CKPD_DEFINE_ERROR(UnknownLabel, UsageError);
CKPD_DEFINE_ERROR(InvalidSpec, UsageError);
CKPD_DEFINE_ERROR(InvalidStrategy, UsageError);
CKPD_DEFINE_ERROR(InvalidRate, UsageError);
CKPD_DEFINE_ERROR(DegenerateInput, UsageError);

CKPD_DEFINE_ERROR(NumericalFailure, NumericalError);
CKPD_DEFINE_ERROR(RegularizationFailure, NumericalError);
CKPD_DEFINE_ERROR(DegenerateCovariance, NumericalError);
CKPD_DEFINE_ERROR(ZeroEnergy, NumericalError);

#undef CKPD_DEFINE_ERROR

}  // namespace ckpd
