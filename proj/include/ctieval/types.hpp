// Shared domain types: tasks, modes, entity classes, partial dates,
// canonical entity values and the closed-world vocabulary.
#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctieval {

enum class TaskKind { extraction, generation };
enum class Mode { zero_shot, few_shot, fine_tuned };

enum class EntityClass {
  campaign,
  apt,
  cve,
  attack_vector,
  country,
  labels,
  goals,
};

std::string to_string(TaskKind t);
std::string to_string(Mode m);
std::string to_string(EntityClass c);
TaskKind task_from_string(std::string_view s);
Mode mode_from_string(std::string_view s);
EntityClass entity_class_from_string(std::string_view s);

/// Classes scored for each task, in report-table order.
const std::vector<EntityClass>& classes_for(TaskKind task);

// A calendar date with optional month/day precision. Reports rarely date
// campaigns more precisely than a month.
struct PartialDate {
  int year = 0;
  std::optional<int> month;
  std::optional<int> day;

  bool valid() const;
  // "2016", "2016-06" or "2016-06-15" depending on precision.
  std::string format() const;

  auto operator<=>(const PartialDate&) const = default;
  bool operator==(const PartialDate&) const = default;
};

// A normalized entity value. Values that cannot be mapped into the closed
// world keep their (case-folded) text and are flagged so the scorer can
// count them as false positives.
struct Canon {
  std::string value;
  bool in_vocab = true;

  auto operator<=>(const Canon&) const = default;
  bool operator==(const Canon&) const = default;
};

// Lowercase, whitespace-collapsed copy of `s`.
std::string fold_term(std::string_view s);

struct ClosedWorldVocabulary {
  std::vector<std::string> attack_vectors;
  std::vector<std::string> countries;
  std::vector<std::string> labels;
  std::vector<std::string> goals;

  const std::vector<std::string>& terms_for(EntityClass c) const;
  bool contains(EntityClass c, std::string_view term) const;

  // Enforces: lists non-empty, terms unique and lowercase-canonical.
  // Throws ValidationError with the offending terms otherwise.
  void validate() const;
};

}  // namespace ctieval
