#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace faithtag {

// Every library failure derives from Error; `kind()` is a stable machine name
// used by the CLI and the HTTP layer.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define FAITHTAG_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

FAITHTAG_DEFINE_ERROR(MalformedInlineTag)
FAITHTAG_DEFINE_ERROR(LengthMismatch)
FAITHTAG_DEFINE_ERROR(BadRatio)
FAITHTAG_DEFINE_ERROR(IoError)
FAITHTAG_DEFINE_ERROR(InvalidSummary)
FAITHTAG_DEFINE_ERROR(EmptyCorpus)
FAITHTAG_DEFINE_ERROR(EmptyDataset)
FAITHTAG_DEFINE_ERROR(DimensionMismatch)
FAITHTAG_DEFINE_ERROR(NoValidPositions)
FAITHTAG_DEFINE_ERROR(ModelNotTrained)
FAITHTAG_DEFINE_ERROR(OutOfRangeTagId)
FAITHTAG_DEFINE_ERROR(MissingGoldSummary)
FAITHTAG_DEFINE_ERROR(UnknownVariant)
FAITHTAG_DEFINE_ERROR(BadShots)
FAITHTAG_DEFINE_ERROR(StaleRevision)
FAITHTAG_DEFINE_ERROR(UnknownTask)
FAITHTAG_DEFINE_ERROR(NoOpenTasks)
FAITHTAG_DEFINE_ERROR(TaskNotClaimed)
FAITHTAG_DEFINE_ERROR(CheckpointError)

#undef FAITHTAG_DEFINE_ERROR

/// JSONL schema violation; `line()` is 1-based.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& message)
      : Error("SchemaError", "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised by a chat client; carries the example being processed.
class ClientError : public Error {
 public:
  ClientError(std::string example_id, const std::string& message)
      : Error("ClientError", "example " + example_id + ": " + message),
        example_id_(std::move(example_id)) {}

  const std::string& example_id() const noexcept { return example_id_; }

 private:
  std::string example_id_;
};

struct PositionProblem {
  std::size_t position;
  std::string reason;
};

/// Tag submission rejected; one entry per offending position.
class InvalidTags : public Error {
 public:
  explicit InvalidTags(std::vector<PositionProblem> problems)
      : Error("InvalidTags", describe(problems)), problems_(std::move(problems)) {}

  const std::vector<PositionProblem>& problems() const noexcept { return problems_; }

 private:
  static std::string describe(const std::vector<PositionProblem>& problems) {
    std::string out = "invalid tags:";
    for (const auto& p : problems) {
      out += " [" + std::to_string(p.position) + "] " + p.reason + ";";
    }
    return out;
  }

  std::vector<PositionProblem> problems_;
};

}  // namespace faithtag
