#include "kneemark/cv_split.hpp"

#include <algorithm>
#include <random>

namespace kneemark {

std::vector<int> FoldSplit::validation_records(int fold) const {
  std::vector<int> out;
  for (size_t i = 0; i < fold_of_record.size(); ++i) {
    if (fold_of_record[i] == fold) out.push_back(int(i));
  }
  return out;
}

std::vector<int> FoldSplit::training_records(int fold) const {
  std::vector<int> out;
  for (size_t i = 0; i < fold_of_record.size(); ++i) {
    if (fold_of_record[i] != fold) out.push_back(int(i));
  }
  return out;
}

FoldSplit make_cv_splits(const std::vector<AnnotationRecord>& records, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs k >= 2, got " + std::to_string(k));
  FoldSplit split;
  split.k = k;
  for (const auto& r : records) {
    auto [it, inserted] = split.patient_kl.try_emplace(r.patient_id, r.kl);
    if (!inserted) it->second = std::max(it->second, r.kl);
  }
  if (split.patient_kl.size() < size_t(k)) {
    throw ConfigError("cannot split " + std::to_string(split.patient_kl.size()) + " patients into " +
                      std::to_string(k) + " folds");
  }

  std::map<int, std::vector<std::string>> by_grade;  // ids arrive sorted from the map
  for (const auto& [id, kl] : split.patient_kl) by_grade[kl].push_back(id);

  std::mt19937_64 rng(seed);
  int next = 0;
  for (auto& [grade, ids] : by_grade) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) {
      split.fold_of_patient[id] = next;
      next = (next + 1) % k;
    }
  }
  for (const auto& r : records) split.fold_of_record.push_back(split.fold_of_patient.at(r.patient_id));
  return split;
}

}  // namespace kneemark
