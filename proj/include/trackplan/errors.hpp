#pragma once

#include <stdexcept>
#include <string>

namespace trackplan {

// Base of every typed failure condition raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A point (or commanded depth) lies at or behind the camera plane.
struct NonPositiveDepth : Error {
  explicit NonPositiveDepth(const std::string& msg = "point has non-positive depth") : Error(msg) {}
};

// log of a rotation at the cut locus (angle within 1e-6 of pi) is ill-defined.
struct NearPiRotation : Error {
  explicit NearPiRotation(const std::string& msg = "rotation angle too close to pi for log") : Error(msg) {}
};

// Shape sampling failed the non-coplanarity check after the retry budget.
struct DegenerateShape : Error {
  explicit DegenerateShape(const std::string& msg = "degenerate shape sample") : Error(msg) {}
};

// Array/tensor dimensions do not match the declared contract.
struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg = "shape mismatch") : Error(msg) {}
};

// Fewer than the minimum number of moving points survived filtering.
struct NoMovingPoints : Error {
  explicit NoMovingPoints(const std::string& msg = "fewer than 6 moving points") : Error(msg) {}
};

// Point set is rank-deficient (collinear) and the solve cannot proceed.
struct DegenerateGeometry : Error {
  explicit DegenerateGeometry(const std::string& msg = "collinear point set") : Error(msg) {}
};

// The solve started from an unusable state (e.g. points behind the camera).
struct DivergedSolve : Error {
  explicit DivergedSolve(const std::string& msg = "solver diverged") : Error(msg) {}
};

// RANSAC found no hypothesis with a large enough inlier set.
struct NoConsensus : Error {
  explicit NoConsensus(const std::string& msg = "no RANSAC consensus") : Error(msg) {}
};

// Training loss became NaN or infinite.
struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(const std::string& msg = "non-finite loss") : Error(msg) {}
};

// Grasp-pose computation received no points.
struct EmptyPointSet : Error {
  explicit EmptyPointSet(const std::string& msg = "empty point set") : Error(msg) {}
};

// Simulator stepped past its maximum horizon.
struct HorizonExceeded : Error {
  explicit HorizonExceeded(const std::string& msg = "simulation horizon exceeded") : Error(msg) {}
};

// Configuration file or struct failed validation; message names the field.
struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& msg = "invalid config") : Error(msg) {}
};

// Filesystem read/write failure.
struct IoError : Error {
  explicit IoError(const std::string& msg = "io error") : Error(msg) {}
};

}  // namespace trackplan
