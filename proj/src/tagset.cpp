#include "mtcrf/tagset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "mtcrf/error.hpp"

namespace mtcrf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyTask: return "EmptyTask";
    case ErrorKind::kSchemeViolation: return "SchemeViolation";
    case ErrorKind::kUnknownLabel: return "UnknownLabel";
    case ErrorKind::kColumnCountMismatch: return "ColumnCountMismatch";
    case ErrorKind::kSizeExceedsCorpus: return "SizeExceedsCorpus";
    case ErrorKind::kAlignmentMismatch: return "AlignmentMismatch";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::kMissingCoupledLabels: return "MissingCoupledLabels";
    case ErrorKind::kMissingCoupling: return "MissingCoupling";
    case ErrorKind::kWrongVariant: return "WrongVariant";
    case ErrorKind::kTooLarge: return "TooLarge";
    case ErrorKind::kEmptyGrid: return "EmptyGrid";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kFormat: return "Format";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

const char* to_string(Scheme scheme) {
  return scheme == Scheme::kBio ? "BIO" : "FLAT";
}

Scheme parse_scheme(const std::string& text) {
  std::string upper = text;
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (upper == "BIO") return Scheme::kBio;
  if (upper == "FLAT") return Scheme::kFlat;
  throw Error(ErrorKind::kInvalidArgument, "unknown tag scheme '" + text + "'");
}

namespace {

bool has_space(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

bool is_prefixed(const std::string& s, char tag) {
  return s.size() > 2 && s[0] == tag && s[1] == '-';
}

}  // namespace

TaskSchema::TaskSchema(std::string name, Scheme scheme,
                       std::vector<std::string> labels)
    : name_(std::move(name)), scheme_(scheme), labels_(std::move(labels)) {
  if (labels_.empty()) {
    throw Error(ErrorKind::kEmptyTask, "task '" + name_ + "' has no labels");
  }
  if (name_.empty() || has_space(name_)) {
    throw Error(ErrorKind::kInvalidArgument,
                "task name must be non-empty without whitespace: '" + name_ +
                    "'");
  }
  for (LabelId id = 0; id < size(); ++id) {
    const std::string& surface = labels_[id];
    if (surface.empty() || has_space(surface)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "label surface must be non-empty without whitespace: '" +
                      surface + "'");
    }
    if (!index_.emplace(surface, id).second) {
      throw Error(ErrorKind::kInvalidArgument,
                  "duplicate label '" + surface + "' in task " + name_);
    }
    if (surface == "O") {
      parts_.push_back(Part::kOutside);
      types_.push_back("");
    } else if (scheme_ == Scheme::kBio) {
      if (is_prefixed(surface, 'B')) {
        parts_.push_back(Part::kBegin);
      } else if (is_prefixed(surface, 'I')) {
        parts_.push_back(Part::kInside);
      } else {
        throw Error(ErrorKind::kSchemeViolation,
                    "label '" + surface + "' of BIO task " + name_ +
                        " lacks a B-/I- prefix");
      }
      types_.push_back(surface.substr(2));
    } else {
      parts_.push_back(Part::kFlat);
      types_.push_back(surface);
    }
  }
  if (scheme_ == Scheme::kBio) {
    for (LabelId id = 0; id < size(); ++id) {
      if (parts_[id] == Part::kInside && begin_of(id) < 0) {
        throw Error(ErrorKind::kSchemeViolation,
                    "label '" + labels_[id] + "' of task " + name_ +
                        " has no matching B-" + types_[id]);
      }
    }
  }
}

LabelId TaskSchema::encode(const std::string& surface) const {
  auto it = index_.find(surface);
  if (it == index_.end()) {
    throw Error(ErrorKind::kUnknownLabel,
                "'" + surface + "' is not a label of task " + name_);
  }
  return it->second;
}

const std::string& TaskSchema::decode(LabelId id) const {
  if (id < 0 || id >= size()) {
    throw Error(ErrorKind::kLabelOutOfRange,
                "label id " + std::to_string(id) + " out of range for task " +
                    name_);
  }
  return labels_[id];
}

bool TaskSchema::contains(const std::string& surface) const {
  return index_.count(surface) != 0;
}

LabelId TaskSchema::begin_of(LabelId id) const {
  if (parts_.at(id) != Part::kInside) return -1;
  auto it = index_.find("B-" + types_[id]);
  return it == index_.end() ? -1 : it->second;
}

MultiTaskSchema::MultiTaskSchema(std::vector<TaskSchema> tasks)
    : tasks_(std::move(tasks)) {
  if (tasks_.empty()) {
    throw Error(ErrorKind::kEmptyTask, "schema needs at least one task");
  }
  std::set<std::string> names;
  for (const auto& t : tasks_) {
    if (!names.insert(t.name()).second) {
      throw Error(ErrorKind::kInvalidArgument,
                  "duplicate task name '" + t.name() + "'");
    }
  }
}

int MultiTaskSchema::index_of(const std::string& name) const {
  for (int j = 0; j < num_tasks(); ++j) {
    if (tasks_[j].name() == name) return j;
  }
  return -1;
}

std::vector<int> MultiTaskSchema::label_counts() const {
  std::vector<int> counts;
  for (const auto& t : tasks_) counts.push_back(t.size());
  return counts;
}

TaskSchema build_task_schema(const std::string& name,
                             const std::vector<std::string>& surfaces,
                             Scheme scheme) {
  std::set<std::string> unique(surfaces.begin(), surfaces.end());
  if (unique.empty()) {
    throw Error(ErrorKind::kEmptyTask, "task '" + name + "' has no labels");
  }
  std::vector<std::string> ordered;
  if (unique.erase("O") > 0) ordered.push_back("O");
  ordered.insert(ordered.end(), unique.begin(), unique.end());
  return TaskSchema(name, scheme, std::move(ordered));
}

MultiTaskSchema build_schema(
    const std::vector<std::string>& task_names,
    const std::vector<std::vector<std::string>>& corpus_labels,
    const std::vector<Scheme>& schemes) {
  if (task_names.empty() || task_names.size() != corpus_labels.size() ||
      task_names.size() != schemes.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "build_schema needs one name, label multiset and scheme per "
                "task");
  }
  std::vector<TaskSchema> tasks;
  for (std::size_t j = 0; j < task_names.size(); ++j) {
    tasks.push_back(
        build_task_schema(task_names[j], corpus_labels[j], schemes[j]));
  }
  return MultiTaskSchema(std::move(tasks));
}

std::vector<std::size_t> validate_bio(const TaskSchema& schema,
                                      const LabelSequence& sequence) {
  std::vector<std::size_t> violations;
  if (schema.scheme() != Scheme::kBio) return violations;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const LabelId y = sequence[t];
    if (schema.part(y) != TaskSchema::Part::kInside) continue;
    bool ok = false;
    if (t > 0) {
      const LabelId prev = sequence[t - 1];
      const auto p = schema.part(prev);
      ok = (p == TaskSchema::Part::kBegin || p == TaskSchema::Part::kInside) &&
           schema.type(prev) == schema.type(y);
    }
    if (!ok) violations.push_back(t);
  }
  return violations;
}

Scheme detect_scheme(const std::vector<std::string>& surfaces) {
  bool any = false;
  for (const auto& s : surfaces) {
    if (s == "O") continue;
    if (!is_prefixed(s, 'B') && !is_prefixed(s, 'I')) return Scheme::kFlat;
    any = true;
  }
  return any ? Scheme::kBio : Scheme::kFlat;
}

void write_schema(std::ostream& out, const MultiTaskSchema& schema) {
  for (int j = 0; j < schema.num_tasks(); ++j) {
    const TaskSchema& task = schema.task(j);
    if (j > 0) out << '\n';
    out << "[task]\n";
    out << "name = " << task.name() << '\n';
    out << "scheme = " << to_string(task.scheme()) << '\n';
    out << "labels =";
    for (const auto& label : task.labels()) out << ' ' << label;
    out << '\n';
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

MultiTaskSchema read_schema(std::istream& in) {
  struct Pending {
    std::string name;
    std::string scheme;
    std::vector<std::string> labels;
    bool has_labels = false;
  };
  std::vector<Pending> sections;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line == "[task]") {
      sections.emplace_back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || sections.empty()) {
      throw Error(ErrorKind::kFormat,
                  "schema line " + std::to_string(line_no) + ": '" + line +
                      "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    Pending& cur = sections.back();
    if (key == "name") {
      cur.name = value;
    } else if (key == "scheme") {
      cur.scheme = value;
    } else if (key == "labels") {
      std::istringstream ls(value);
      std::string label;
      while (ls >> label) cur.labels.push_back(label);
      cur.has_labels = true;
    } else {
      throw Error(ErrorKind::kFormat, "schema line " +
                                          std::to_string(line_no) +
                                          ": unknown key '" + key + "'");
    }
  }
  std::vector<TaskSchema> tasks;
  for (auto& s : sections) {
    if (s.name.empty() || s.scheme.empty() || !s.has_labels) {
      throw Error(ErrorKind::kFormat,
                  "schema section missing name, scheme or labels");
    }
    tasks.emplace_back(s.name, parse_scheme(s.scheme), std::move(s.labels));
  }
  return MultiTaskSchema(std::move(tasks));
}

void save_schema(const std::string& path, const MultiTaskSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  write_schema(out, schema);
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

MultiTaskSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return read_schema(in);
}

}  // namespace mtcrf
