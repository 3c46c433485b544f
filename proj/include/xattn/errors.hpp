// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace xattn {

// Error category drives the CLI exit code: usage -> 1, data -> 2,
// numeric -> 3.
enum class ErrorKind { usage, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error(ErrorKind::numeric, "ShapeMismatch: " + msg) {}
};
struct NonFinite : Error {
  explicit NonFinite(const std::string& msg) : Error(ErrorKind::numeric, "NonFinite: " + msg) {}
};
struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(const std::string& msg) : Error(ErrorKind::numeric, "NonFiniteLoss: " + msg) {}
};
struct MissingWord : Error {
  explicit MissingWord(const std::string& word) : Error(ErrorKind::data, "MissingWord: " + word) {}
};
struct EmptyCorpus : Error {
  EmptyCorpus() : Error(ErrorKind::data, "EmptyCorpus: no tokens to train on") {}
};
struct EmptyDataset : Error {
  EmptyDataset() : Error(ErrorKind::data, "EmptyDataset: no samples") {}
};
struct NotEnoughRois : Error {
  explicit NotEnoughRois(const std::string& msg) : Error(ErrorKind::data, "NotEnoughRois: " + msg) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(ErrorKind::data, "ParseError: " + msg) {}
};
struct IdMismatch : Error {
  explicit IdMismatch(const std::string& id) : Error(ErrorKind::data, "IdMismatch: " + id) {}
};
struct FeatureDimMismatch : Error {
  explicit FeatureDimMismatch(const std::string& msg)
      : Error(ErrorKind::data, "FeatureDimMismatch: " + msg) {}
};
struct IoFailure : Error {
  explicit IoFailure(const std::string& msg) : Error(ErrorKind::data, "IoFailure: " + msg) {}
};
struct BadMagic : Error {
  explicit BadMagic(const std::string& msg) : Error(ErrorKind::data, "BadMagic: " + msg) {}
};
struct VersionUnsupported : Error {
  explicit VersionUnsupported(const std::string& msg)
      : Error(ErrorKind::data, "VersionUnsupported: " + msg) {}
};
struct DegenerateBox : Error {
  explicit DegenerateBox(const std::string& msg) : Error(ErrorKind::data, "DegenerateBox: " + msg) {}
};
struct MissingGroundTruth : Error {
  explicit MissingGroundTruth(const std::string& id)
      : Error(ErrorKind::data, "MissingGroundTruth: " + id) {}
};
struct TooFewSamples : Error {
  explicit TooFewSamples(const std::string& msg) : Error(ErrorKind::data, "TooFewSamples: " + msg) {}
};
struct UninitializedRunningStats : Error {
  UninitializedRunningStats()
      : Error(ErrorKind::numeric,
              "UninitializedRunningStats: inference requested before any training step") {}
};

}  // namespace xattn
