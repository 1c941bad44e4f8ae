#pragma once

#include <stdexcept>
#include <string>

namespace corrpose {

// Base for everything this library throws deliberately.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A 3D point ended up at or behind the camera plane (z <= 1e-9).
struct BehindCameraError : Error {
    explicit BehindCameraError(int point_index)
        : Error("point " + std::to_string(point_index) + " is at or behind the camera"),
          index(point_index) {}
    int index;
};

struct ZeroDepthError : Error {
    using Error::Error;
};

// Rank-deficient or otherwise unsolvable geometric configuration.
struct DegenerateError : Error {
    using Error::Error;
};

struct NoConsensusError : Error {
    using Error::Error;
};

// Too few usable measurements (pixels, correspondences) to pose the problem.
struct InsufficientSupportError : Error {
    using Error::Error;
};

struct SingularSystemError : Error {
    using Error::Error;
};

struct NonFiniteError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct OutOfBoundsError : Error {
    using Error::Error;
};

struct EmptyInputError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace corrpose
