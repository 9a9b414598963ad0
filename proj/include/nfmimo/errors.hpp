// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nfmimo {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A flat channel or voxel index outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// An invalid numeric parameter (negative sigma, non-positive radius, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Vector lengths or grids that do not match the operator they are used with.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A voxel center coinciding with an antenna position.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// A request that would exceed a configured memory cap.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Scenario JSON that does not follow the document schema. The message names
/// the offending key path.
class SchemaError : public Error {
 public:
  SchemaError(std::string key_path, const std::string& what)
      : Error(key_path + ": " + what), key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

/// Measurements recorded against a different scenario than the one supplied.
class FingerprintMismatch : public Error {
 public:
  using Error::Error;
};

/// Binary file decoding failures. Each failure mode has its own kind so callers
/// and tests can tell them apart.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, ChecksumMismatch, Malformed, Io };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace nfmimo
