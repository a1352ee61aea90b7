#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "faithtag/corpus.hpp"

namespace faithtag::service {

enum class TaskStatus : std::uint8_t { Open, Claimed, Done };
std::string_view status_name(TaskStatus status) noexcept;

struct AnnotationTask {
  std::string task_id;
  DialogueExample example;  // summary tags start as all O
  TaskStatus status = TaskStatus::Open;
  std::optional<std::string> claimant;
  long revision = 0;  // bumped on every write

  bool operator==(const AnnotationTask&) const = default;
};

struct ServiceStats {
  std::size_t open = 0;
  std::size_t claimed = 0;
  std::size_t done = 0;
  TagStats tags;  // over done tasks
};

/// Annotation queue backed by an append-only JSONL journal. Every write goes
/// to the journal before the in-memory index changes; opening a journal
/// replays it.
class AnnotationService {
 public:
  explicit AnnotationService(std::filesystem::path journal);

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Adds one task per example with every tag reset to O. Returns the ids.
  std::vector<std::string> add_tasks(const std::vector<DialogueExample>& examples);

  /// Oldest open task, now claimed by `annotator`; the annotator's current
  /// claim if it has one. Throws NoOpenTasks.
  AnnotationTask next_task(const std::string& annotator);

  AnnotationTask get(const std::string& task_id) const;  // throws UnknownTask

  /// Throws UnknownTask, TaskNotClaimed, StaleRevision or InvalidTags; no
  /// write happens on any error.
  AnnotationTask submit_tags(const std::string& task_id, const std::vector<Tag>& tags, long revision);

  /// Codes as sent by clients; unknown codes are reported as InvalidTags.
  AnnotationTask submit_tag_codes(const std::string& task_id, const std::vector<std::string>& codes, long revision);

  /// Corpus JSONL of done tasks in task order.
  void export_jsonl(std::ostream& out) const;
  std::string export_jsonl() const;

  ServiceStats stats() const;
  std::size_t size() const;
  const std::filesystem::path& journal_path() const { return journal_; }

 private:
  void append(const std::string& line);
  void apply(const std::string& line, std::size_t line_number);
  AnnotationTask& find(const std::string& task_id);
  const AnnotationTask& find(const std::string& task_id) const;

  std::filesystem::path journal_;
  std::ofstream writer_;
  mutable std::shared_mutex mutex_;
  std::vector<AnnotationTask> tasks_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::string> claims_;  // annotator -> task id
};

/// Category definitions with their reference/model example pairs.
struct GuidelineEntry {
  Tag tag;
  std::string name;
  std::string definition;
  std::optional<std::string> reference_example;
  std::optional<std::string> model_example;
};

const std::vector<GuidelineEntry>& guidelines();

}  // namespace faithtag::service
