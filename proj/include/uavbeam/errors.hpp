#pragma once

#include <stdexcept>
#include <string>

namespace uavbeam {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// geo
struct DegenerateBounds : Error {
  explicit DegenerateBounds(const std::string& m) : Error(m) {}
};
struct ZeroVector : Error {
  explicit ZeroVector(const std::string& m) : Error(m) {}
};

// data
struct EmptyDataset : Error {
  explicit EmptyDataset(const std::string& m) : Error(m) {}
};
struct NoValidChunkSize : Error {
  explicit NoValidChunkSize(const std::string& m) : Error(m) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error(m) {}
};

// synth
struct OutOfSector : Error {
  explicit OutOfSector(const std::string& m) : Error(m) {}
};

// nn
struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& m) : Error(m) {}
};
struct GraphConsumed : Error {
  explicit GraphConsumed(const std::string& m) : Error(m) {}
};
struct ChecksumMismatch : Error {
  explicit ChecksumMismatch(const std::string& m) : Error(m) {}
};

// pipeline
struct InsufficientData : Error {
  explicit InsufficientData(const std::string& m) : Error(m) {}
};

// metrics
struct MissingPowers : Error {
  explicit MissingPowers(const std::string& m) : Error(m) {}
};
struct EmptySet : Error {
  explicit EmptySet(const std::string& m) : Error(m) {}
};

// io
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(m) {}
};

}  // namespace uavbeam
