// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ief {

/// Root of every error raised by the library. The category string is what the
/// CLI reports and maps to an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

/// Mismatched dimensions, shapes or keypoint counts.
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error("structural", what) {}
};

/// Out-of-domain values: non-finite coordinates, non-positive sigma, etc.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

/// Mean-pose initialization failed (a keypoint is annotated nowhere).
class InitializationError : public Error {
 public:
  explicit InitializationError(const std::string& what) : Error("initialization", what) {}
};

/// API misuse, e.g. backward() on a stale forward cache.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

/// Non-finite loss or gradient during training.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

/// Non-finite network output during the test-time loop.
class InferenceError : public Error {
 public:
  explicit InferenceError(const std::string& what) : Error("inference", what) {}
};

/// Persistence failures. Subclasses are distinct so callers can tell them apart.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
  IoError(std::string category, const std::string& what) : Error(std::move(category), what) {}
};

class VersionMismatchError : public IoError {
 public:
  explicit VersionMismatchError(const std::string& what) : IoError("version_mismatch", what) {}
};

class TruncatedBlobError : public IoError {
 public:
  explicit TruncatedBlobError(const std::string& what) : IoError("truncated_blob", what) {}
};

class ChecksumError : public IoError {
 public:
  explicit ChecksumError(const std::string& what) : IoError("checksum", what) {}
};

}  // namespace ief
