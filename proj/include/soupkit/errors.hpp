#pragma once

#include <stdexcept>
#include <string>

namespace soupkit {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File could not be opened, read or written.
struct IoError : Error {
    using Error::Error;
};

// Checkpoint header is unreadable: bad magic, malformed manifest JSON,
// truncated file, or tensor records whose offsets overlap, run backwards
// or point outside the data section.
struct CorruptHeaderError : Error {
    using Error::Error;
};

// format_version (or a dtype tag) this build does not understand.
struct UnsupportedVersionError : Error {
    using Error::Error;
};

// Declared byte length disagrees with product(shape) * sizeof(f32),
// or a shape dimension is not a positive integer.
struct ShapeMismatchError : Error {
    using Error::Error;
};

// NaN or Inf encountered in a payload or produced by arithmetic.
struct NonFiniteError : Error {
    using Error::Error;
};

// Two parameter sets disagree in tensor names, shapes or order.
struct SchemaMismatchError : Error {
    using Error::Error;
};

// Partition spec does not cover the model schema. `kind` names which
// invariant broke; `offender` is the tensor name or component index.
struct PartitionError : Error {
    enum class Kind {
        UnassignedTensor,
        UnknownTensor,
        EmptyComponent,
        InvalidIndex,
        TooManyComponents,
    };
    Kind kind;
    std::string offender;

    PartitionError(Kind k, std::string off, const std::string& msg)
        : Error(msg), kind(k), offender(std::move(off)) {}
};

// Vector outside its box constraints or of the wrong dimension.
struct BoundsError : Error {
    using Error::Error;
};

// Bad argument to an operation (empty pool, k < 1, tau out of range, ...).
struct InvalidArgumentError : Error {
    using Error::Error;
};

// The black-box objective threw. Carries how many evaluations completed
// before the failure.
struct ObjectiveError : Error {
    int evaluations_completed;

    ObjectiveError(const std::string& msg, int completed)
        : Error(msg), evaluations_completed(completed) {}
};

}  // namespace soupkit
