#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mtcrf {

using LabelId = int;
using LabelSequence = std::vector<LabelId>;

enum class Scheme { kBio, kFlat };

const char* to_string(Scheme scheme);
Scheme parse_scheme(const std::string& text);

// Label inventory of one task. Ids are dense (0..K-1); "O" is pinned to 0
// when present and the remaining surfaces are sorted lexicographically.
class TaskSchema {
 public:
  TaskSchema() = default;
  // Takes the inventory in id order and validates it.
  TaskSchema(std::string name, Scheme scheme, std::vector<std::string> labels);

  const std::string& name() const { return name_; }
  Scheme scheme() const { return scheme_; }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

  LabelId encode(const std::string& surface) const;
  const std::string& decode(LabelId id) const;
  bool contains(const std::string& surface) const;

  // BIO role of a label. In FLAT tasks every label other than a literal "O"
  // is kFlat.
  enum class Part { kOutside, kBegin, kInside, kFlat };
  Part part(LabelId id) const { return parts_.at(id); }
  // Entity type X of B-X / I-X (or the whole surface for FLAT labels).
  const std::string& type(LabelId id) const { return types_.at(id); }
  // Id of "B-X" for the type of an I-X label, -1 otherwise.
  LabelId begin_of(LabelId id) const;

  bool operator==(const TaskSchema& other) const {
    return name_ == other.name_ && scheme_ == other.scheme_ &&
           labels_ == other.labels_;
  }

 private:
  std::string name_;
  Scheme scheme_ = Scheme::kFlat;
  std::vector<std::string> labels_;
  std::map<std::string, LabelId> index_;
  std::vector<Part> parts_;
  std::vector<std::string> types_;
};

// Ordered task list; the order is the cascade hierarchy.
class MultiTaskSchema {
 public:
  MultiTaskSchema() = default;
  explicit MultiTaskSchema(std::vector<TaskSchema> tasks);

  int num_tasks() const { return static_cast<int>(tasks_.size()); }
  const TaskSchema& task(int j) const { return tasks_.at(j); }
  const std::vector<TaskSchema>& tasks() const { return tasks_; }
  // -1 when absent.
  int index_of(const std::string& name) const;
  std::vector<int> label_counts() const;

  bool operator==(const MultiTaskSchema& other) const {
    return tasks_ == other.tasks_;
  }

 private:
  std::vector<TaskSchema> tasks_;
};

// Builds a schema from observed surfaces: one multiset (or set) per task.
MultiTaskSchema build_schema(
    const std::vector<std::string>& task_names,
    const std::vector<std::vector<std::string>>& corpus_labels,
    const std::vector<Scheme>& schemes);

TaskSchema build_task_schema(const std::string& name,
                             const std::vector<std::string>& surfaces,
                             Scheme scheme);

// Positions where I-X follows neither B-X nor I-X. Always empty for FLAT.
std::vector<std::size_t> validate_bio(const TaskSchema& schema,
                                      const LabelSequence& sequence);

// BIO if every non-"O" surface carries a B-/I- prefix, FLAT otherwise.
Scheme detect_scheme(const std::vector<std::string>& surfaces);

// Plain-text schema file:
//   [task]
//   name = MWE
//   scheme = BIO
//   labels = O B-MWE I-MWE
void write_schema(std::ostream& out, const MultiTaskSchema& schema);
MultiTaskSchema read_schema(std::istream& in);
void save_schema(const std::string& path, const MultiTaskSchema& schema);
MultiTaskSchema load_schema(const std::string& path);

}  // namespace mtcrf
