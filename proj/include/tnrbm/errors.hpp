#pragma once

#include <stdexcept>
#include <string>

namespace tnrbm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dimension or shape mismatch between tensors.
struct ShapeError : Error {
    using Error::Error;
};

/// Index outside the valid range of a tensor or sequence.
struct IndexError : Error {
    using Error::Error;
};

/// Invalid MPO rank vector (boundary, adjacency or zero ranks).
struct RankError : Error {
    using Error::Error;
};

/// Argument outside its admissible domain (probabilities, fractions, variants).
struct ValueError : Error {
    using Error::Error;
};

/// Operation refused because it would exceed a configured size cap.
struct TooLargeError : Error {
    using Error::Error;
};

/// Filesystem-level failure (open, read, write, rename).
struct IoError : Error {
    using Error::Error;
};

/// Malformed file contents (bad magic, truncation, unsupported fields).
struct FormatError : Error {
    using Error::Error;
};

} // namespace tnrbm
