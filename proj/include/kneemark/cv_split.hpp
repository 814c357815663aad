#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kneemark/imaging.hpp"

namespace kneemark {

// Patient-wise, KL-stratified assignment of records to k folds.
struct FoldSplit {
  int k = 0;
  std::vector<int> fold_of_record;             // aligned with the input records
  std::map<std::string, int> fold_of_patient;  // patient id -> fold
  std::map<std::string, int> patient_kl;       // max KL over the patient's knees

  std::vector<int> validation_records(int fold) const;
  std::vector<int> training_records(int fold) const;
};

// Patients are grouped by their maximum KL grade, shuffled within each grade
// from the seed, and dealt round-robin to folds with the dealing position
// carried over from one grade to the next. Throws ConfigError when k < 2 or
// there are fewer patients than folds.
FoldSplit make_cv_splits(const std::vector<AnnotationRecord>& records, int k, std::uint64_t seed);

}  // namespace kneemark
