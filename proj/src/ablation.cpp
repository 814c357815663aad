#include "kneemark/ablation.hpp"

#include <cstdio>

#include "kneemark/annotations.hpp"

namespace kneemark {

std::string AblationSetting::name() const {
  std::string n = to_string(loss);
  n += block == BlockKind::kHmp ? "" : "+bottleneck";
  if (mixup_alpha > 0.0) n += "+mixup" + format_double(mixup_alpha);
  if (weight_decay == 0.0) n += "+nowd";
  if (!dropout) n += "+nodropout";
  if (jitter) n += "+jitter";
  if (cutout_pct > 0) n += "+cutout" + std::to_string(cutout_pct);
  if (finetune) n += "+finetune";
  return n;
}

TrainConfig AblationSetting::apply(TrainConfig base) const {
  base.loss.kind = loss;
  base.model.block = block;
  base.mixup = mixup_alpha > 0.0;
  if (base.mixup) base.mixup_alpha = mixup_alpha;
  base.weight_decay = weight_decay;
  if (!dropout) base.model.dropout = 0.0;
  base.augmentation.jitter_px = jitter ? 1.0 : 0.0;
  base.augmentation.cutout_fraction = cutout_pct / 100.0;
  return base;
}

std::vector<AblationSetting> ablation_table_rows() {
  std::vector<AblationSetting> rows;
  for (LossKind loss : {LossKind::kL2, LossKind::kL1, LossKind::kElastic, LossKind::kWing}) {
    AblationSetting s;
    s.loss = loss;
    rows.push_back(s);
  }
  AblationSetting bottleneck;
  bottleneck.block = BlockKind::kBottleneck;
  rows.push_back(bottleneck);
  for (double wd : {1e-4, 0.0}) {
    for (double alpha : {0.1, 0.2, 0.5, 0.75}) {
      AblationSetting s;
      s.mixup_alpha = alpha;
      s.weight_decay = wd;
      rows.push_back(s);
    }
  }
  AblationSetting best;
  best.mixup_alpha = 0.75;
  best.weight_decay = 0.0;
  AblationSetting no_dropout = best;
  no_dropout.dropout = false;
  rows.push_back(no_dropout);
  AblationSetting jitter = best;
  jitter.jitter = true;
  rows.push_back(jitter);
  for (int pct : {5, 10, 25}) {
    AblationSetting s = best;
    s.cutout_pct = pct;
    rows.push_back(s);
  }
  AblationSetting finetune = best;
  finetune.cutout_pct = 10;
  finetune.finetune = true;
  rows.push_back(finetune);
  return rows;
}

std::vector<AblationSetting> ablation_full_grid() {
  std::vector<AblationSetting> rows;
  for (LossKind loss : {LossKind::kL1, LossKind::kL2, LossKind::kElastic, LossKind::kWing})
    for (BlockKind block : {BlockKind::kHmp, BlockKind::kBottleneck})
      for (double alpha : {0.0, 0.1, 0.2, 0.5, 0.75})
        for (double wd : {0.0, 1e-4})
          for (bool dropout : {true, false})
            for (bool jitter : {false, true})
              for (int cutout : {0, 5, 10, 25})
                for (bool finetune : {false, true})
                  rows.push_back({loss, block, alpha, wd, dropout, jitter, cutout, finetune});
  return rows;
}

std::string ablation_csv_header() {
  return "setting,loss,block,mixup_alpha,weight_decay,dropout,jitter,cutout_pct,finetune,pck1,pck15,pck2,pck25,"
         "outliers\n";
}

std::string ablation_csv_row(const AblationSetting& s, const EpochStats* result) {
  std::string row = s.name() + "," + to_string(s.loss) + "," + to_string(s.block) + "," +
                    format_double(s.mixup_alpha) + "," + format_double(s.weight_decay) + "," +
                    (s.dropout ? "1" : "0") + "," + (s.jitter ? "1" : "0") + "," + std::to_string(s.cutout_pct) +
                    "," + (s.finetune ? "1" : "0");
  for (int k = 0; k < 4; ++k) row += "," + (result ? format_double(result->pck[size_t(k)]) : std::string());
  row += "," + (result ? format_double(result->outliers) : std::string());
  return row + "\n";
}

}  // namespace kneemark
