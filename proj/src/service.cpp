#include "faithtag/service.hpp"

#include <sstream>

#include "json.hpp"

namespace faithtag::service {

using json = nlohmann::json;

std::string_view status_name(TaskStatus status) noexcept {
  switch (status) {
    case TaskStatus::Open:
      return "open";
    case TaskStatus::Claimed:
      return "claimed";
    case TaskStatus::Done:
      return "done";
  }
  return "open";
}

AnnotationService::AnnotationService(std::filesystem::path journal) : journal_(std::move(journal)) {
  if (journal_.has_parent_path()) std::filesystem::create_directories(journal_.parent_path());
  if (std::filesystem::exists(journal_)) {
    std::ifstream in(journal_, std::ios::binary);
    if (!in) throw IoError("cannot open journal " + journal_.string());
    std::string line;
    std::size_t n = 0;
    std::uintmax_t good = 0;
    while (std::getline(in, line)) {
      ++n;
      const bool complete = !in.eof();
      if (!line.empty()) {
        try {
          apply(line, n);
        } catch (const SchemaError&) {
          // A torn final write is dropped; damage anywhere else is fatal.
          if (complete) throw;
          break;
        }
      }
      if (complete) good += line.size() + 1;
    }
    in.close();
    if (good != std::filesystem::file_size(journal_)) std::filesystem::resize_file(journal_, good);
  }
  writer_.open(journal_, std::ios::binary | std::ios::app);
  if (!writer_) throw IoError("cannot write journal " + journal_.string());
}

void AnnotationService::append(const std::string& line) {
  writer_ << line << '\n';
  writer_.flush();
  if (!writer_) throw IoError("journal write failed for " + journal_.string());
}

void AnnotationService::apply(const std::string& line, std::size_t n) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(n, std::string("journal line is not JSON: ") + e.what());
  }
  try {
    const std::string op = j.at("op").get<std::string>();
    const std::string id = j.at("task_id").get<std::string>();
    if (op == "add") {
      if (index_.count(id)) throw SchemaError(n, "duplicate task " + id);
      AnnotationTask task;
      task.task_id = id;
      task.example = example_from_jsonl(j.at("example").dump(), n);
      task.revision = j.at("revision").get<long>();
      index_.emplace(id, tasks_.size());
      tasks_.push_back(std::move(task));
      return;
    }
    auto it = index_.find(id);
    if (it == index_.end()) throw SchemaError(n, "journal refers to unknown task " + id);
    AnnotationTask& task = tasks_[it->second];
    if (op == "claim") {
      const std::string annotator = j.at("annotator").get<std::string>();
      task.status = TaskStatus::Claimed;
      task.claimant = annotator;
      task.revision = j.at("revision").get<long>();
      claims_[annotator] = id;
    } else if (op == "submit") {
      std::vector<Tag> tags;
      for (const auto& code : j.at("tags")) {
        auto tag = parse_tag_code(code.get<std::string>());
        if (!tag) throw SchemaError(n, "unknown tag code in journal");
        tags.push_back(*tag);
      }
      if (!summary_problems(TaggedSummary{task.example.summary.tokens, tags, std::nullopt}).empty()) {
        throw SchemaError(n, "journal holds invalid tags for " + id);
      }
      task.example.summary.tags = std::move(tags);
      task.status = TaskStatus::Done;
      task.revision = j.at("revision").get<long>();
      if (task.claimant) {
        auto c = claims_.find(*task.claimant);
        if (c != claims_.end() && c->second == id) claims_.erase(c);
      }
    } else {
      throw SchemaError(n, "unknown journal op '" + op + "'");
    }
  } catch (const json::exception& e) {
    throw SchemaError(n, std::string("malformed journal entry: ") + e.what());
  }
}

AnnotationTask& AnnotationService::find(const std::string& task_id) {
  auto it = index_.find(task_id);
  if (it == index_.end()) throw UnknownTask("no task '" + task_id + "'");
  return tasks_[it->second];
}

const AnnotationTask& AnnotationService::find(const std::string& task_id) const {
  auto it = index_.find(task_id);
  if (it == index_.end()) throw UnknownTask("no task '" + task_id + "'");
  return tasks_[it->second];
}

std::vector<std::string> AnnotationService::add_tasks(const std::vector<DialogueExample>& examples) {
  std::unique_lock lock(mutex_);
  std::vector<std::string> ids;
  for (auto ex : examples) {
    validate_example(ex);
    std::fill(ex.summary.tags.begin(), ex.summary.tags.end(), Tag::O);
    std::string id = "task-" + std::to_string(tasks_.size() + 1);
    while (index_.count(id)) id += "x";
    json j = {{"op", "add"}, {"task_id", id}, {"example", json::parse(example_to_jsonl(ex))}, {"revision", 0}};
    const std::string line = j.dump();
    append(line);
    apply(line, 0);
    ids.push_back(std::move(id));
  }
  return ids;
}

AnnotationTask AnnotationService::next_task(const std::string& annotator) {
  if (annotator.empty()) throw InvalidSummary("annotator id must be non-empty");
  std::unique_lock lock(mutex_);
  if (auto c = claims_.find(annotator); c != claims_.end()) return find(c->second);
  for (const auto& task : tasks_) {
    if (task.status != TaskStatus::Open) continue;
    json j = {{"op", "claim"}, {"task_id", task.task_id}, {"annotator", annotator}, {"revision", task.revision + 1}};
    const std::string line = j.dump();
    append(line);
    apply(line, 0);
    return find(task.task_id);
  }
  throw NoOpenTasks("no open tasks");
}

AnnotationTask AnnotationService::get(const std::string& task_id) const {
  std::shared_lock lock(mutex_);
  return find(task_id);
}

AnnotationTask AnnotationService::submit_tags(const std::string& task_id, const std::vector<Tag>& tags,
                                              long revision) {
  std::unique_lock lock(mutex_);
  const AnnotationTask& task = find(task_id);
  if (task.status == TaskStatus::Open) throw TaskNotClaimed("task '" + task_id + "' has not been claimed");
  if (revision != task.revision) {
    throw StaleRevision("task '" + task_id + "' is at revision " + std::to_string(task.revision) + ", not " +
                        std::to_string(revision));
  }
  auto problems = summary_problems(TaggedSummary{task.example.summary.tokens, tags, std::nullopt});
  if (!problems.empty()) throw InvalidTags(std::move(problems));
  json codes = json::array();
  for (Tag t : tags) codes.push_back(std::string(tag_code(t)));
  json j = {{"op", "submit"}, {"task_id", task_id}, {"tags", std::move(codes)}, {"revision", task.revision + 1}};
  const std::string line = j.dump();
  append(line);
  apply(line, 0);
  return find(task_id);
}

AnnotationTask AnnotationService::submit_tag_codes(const std::string& task_id, const std::vector<std::string>& codes,
                                                   long revision) {
  std::vector<Tag> tags;
  std::vector<PositionProblem> problems;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto tag = parse_tag_code(codes[i]);
    if (tag) {
      tags.push_back(*tag);
    } else {
      problems.push_back({i, "unknown tag code '" + codes[i] + "'"});
    }
  }
  if (!problems.empty()) {
    get(task_id);  // unknown task wins over bad codes
    throw InvalidTags(std::move(problems));
  }
  return submit_tags(task_id, tags, revision);
}

void AnnotationService::export_jsonl(std::ostream& out) const {
  std::shared_lock lock(mutex_);
  for (const auto& task : tasks_) {
    if (task.status != TaskStatus::Done) continue;
    validate_example(task.example);
    out << example_to_jsonl(task.example) << '\n';
  }
}

std::string AnnotationService::export_jsonl() const {
  std::ostringstream out;
  export_jsonl(out);
  return out.str();
}

ServiceStats AnnotationService::stats() const {
  std::shared_lock lock(mutex_);
  ServiceStats s;
  std::vector<DialogueExample> done;
  for (const auto& task : tasks_) {
    switch (task.status) {
      case TaskStatus::Open:
        ++s.open;
        break;
      case TaskStatus::Claimed:
        ++s.claimed;
        break;
      case TaskStatus::Done:
        ++s.done;
        done.push_back(task.example);
        break;
    }
  }
  s.tags = tag_stats(done);
  return s;
}

std::size_t AnnotationService::size() const {
  std::shared_lock lock(mutex_);
  return tasks_.size();
}

const std::vector<GuidelineEntry>& guidelines() {
  static const std::vector<GuidelineEntry> entries = {
      {Tag::W, "Wrong Reference Error",
       "A pronoun in the generated summary either refers to the wrong or non-existent noun it should be replaced, "
       "or when a personal named entity in the summary is used incorrectly instead of a different personal entity "
       "mentioned in the reference.",
       "Mohit asked Darlene about the test.", "Darlene asked Mohit about the test."},
      {Tag::OB, "Object Error",
       "Factual errors that arise from inaccuracies in either the direct or indirect objects.",
       "Tara raised her glass.", "Tara raised her spoon."},
      {Tag::C, "Circumstantial Error",
       "Circumstantial information (e.g., date, time, location) about the predicate doesn't match the reference.",
       "The USA was founded in 1776.", "The USA was founded in 1767."},
      {Tag::N, "Other Uncommon Errors",
       "Errors that encompass factual errors resulting from discrepancies in grammatical tense between the "
       "generated summary and the reference.",
       "The children will go to the library.", "The children went to the library."},
      {Tag::O, "Not Hallucinated", "Tokens in the summary that are not hallucinated.", std::nullopt, std::nullopt},
      {Tag::M, "Missing Information",
       "A special tag to be given at the end of sentence token to indicate if a summary suffers from missing "
       "information hallucination.",
       std::nullopt, std::nullopt},
  };
  return entries;
}

}  // namespace faithtag::service
