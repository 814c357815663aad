#pragma once

#include <string>
#include <vector>

#include "kneemark/training.hpp"

namespace kneemark {

// One configuration of the ablation axes.
struct AblationSetting {
  LossKind loss = LossKind::kWing;
  BlockKind block = BlockKind::kHmp;
  double mixup_alpha = 0.0;  // 0 disables MixUp
  double weight_decay = 1e-4;
  bool dropout = true;
  bool jitter = false;
  int cutout_pct = 0;
  bool finetune = false;

  std::string name() const;
  bool operator==(const AblationSetting&) const = default;
  // Overrides the ablated fields of base.
  TrainConfig apply(TrainConfig base) const;
};

// The 19 single-axis ablation rows.
std::vector<AblationSetting> ablation_table_rows();
// Cartesian product of every axis value.
std::vector<AblationSetting> ablation_full_grid();

std::string ablation_csv_header();
std::string ablation_csv_row(const AblationSetting& setting, const EpochStats* result);

}  // namespace kneemark
