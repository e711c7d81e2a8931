#include "ctieval/types.hpp"

#include <cstdio>
#include <set>

#include "ctieval/errors.hpp"

namespace ctieval {

std::string to_string(TaskKind t) {
  return t == TaskKind::extraction ? "extraction" : "generation";
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::zero_shot: return "zero_shot";
    case Mode::few_shot: return "few_shot";
    case Mode::fine_tuned: return "fine_tuned";
  }
  return "?";
}

std::string to_string(EntityClass c) {
  switch (c) {
    case EntityClass::campaign: return "campaign";
    case EntityClass::apt: return "apt";
    case EntityClass::cve: return "cve";
    case EntityClass::attack_vector: return "attack_vector";
    case EntityClass::country: return "country";
    case EntityClass::labels: return "labels";
    case EntityClass::goals: return "goals";
  }
  return "?";
}

TaskKind task_from_string(std::string_view s) {
  if (s == "extraction") return TaskKind::extraction;
  if (s == "generation") return TaskKind::generation;
  throw std::invalid_argument("unknown task: " + std::string(s));
}

Mode mode_from_string(std::string_view s) {
  if (s == "zero_shot") return Mode::zero_shot;
  if (s == "few_shot") return Mode::few_shot;
  if (s == "fine_tuned") return Mode::fine_tuned;
  throw std::invalid_argument("unknown mode: " + std::string(s));
}

EntityClass entity_class_from_string(std::string_view s) {
  if (s == "campaign") return EntityClass::campaign;
  if (s == "apt") return EntityClass::apt;
  if (s == "cve") return EntityClass::cve;
  if (s == "attack_vector") return EntityClass::attack_vector;
  if (s == "country") return EntityClass::country;
  if (s == "labels") return EntityClass::labels;
  if (s == "goals") return EntityClass::goals;
  throw std::invalid_argument("unknown entity class: " + std::string(s));
}

const std::vector<EntityClass>& classes_for(TaskKind task) {
  static const std::vector<EntityClass> extraction = {
      EntityClass::campaign, EntityClass::apt, EntityClass::cve,
      EntityClass::attack_vector};
  static const std::vector<EntityClass> generation = {
      EntityClass::goals, EntityClass::labels, EntityClass::country,
      EntityClass::cve, EntityClass::attack_vector};
  return task == TaskKind::extraction ? extraction : generation;
}

bool PartialDate::valid() const {
  if (year < 1 || year > 9999) return false;
  if (month && (*month < 1 || *month > 12)) return false;
  if (day && (!month || *day < 1 || *day > 31)) return false;
  return true;
}

std::string PartialDate::format() const {
  char buf[16];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%04d", year);
  out = buf;
  if (month) {
    std::snprintf(buf, sizeof(buf), "-%02d", *month);
    out += buf;
    if (day) {
      std::snprintf(buf, sizeof(buf), "-%02d", *day);
      out += buf;
    }
  }
  return out;
}

std::string fold_term(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

const std::vector<std::string>& ClosedWorldVocabulary::terms_for(EntityClass c) const {
  switch (c) {
    case EntityClass::attack_vector: return attack_vectors;
    case EntityClass::country: return countries;
    case EntityClass::labels: return labels;
    case EntityClass::goals: return goals;
    default:
      throw std::invalid_argument("no closed-world vocabulary for class " +
                                  to_string(c));
  }
}

bool ClosedWorldVocabulary::contains(EntityClass c, std::string_view term) const {
  const auto& terms = terms_for(c);
  return std::find(terms.begin(), terms.end(), term) != terms.end();
}

void ClosedWorldVocabulary::validate() const {
  auto check = [](const char* name, const std::vector<std::string>& terms) {
    if (terms.empty())
      throw ValidationError(std::string("vocabulary list '") + name + "' is empty");
    std::set<std::string> seen;
    for (const auto& t : terms) {
      if (t != fold_term(t))
        throw ValidationError(std::string("vocabulary term not lowercase-canonical in '") +
                              name + "': " + t);
      if (!seen.insert(t).second)
        throw ValidationError(std::string("duplicate vocabulary term in '") + name +
                              "': " + t);
    }
  };
  check("attack_vectors", attack_vectors);
  check("countries", countries);
  check("labels", labels);
  check("goals", goals);
}

}  // namespace ctieval
