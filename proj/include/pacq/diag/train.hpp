#pragma once

#include <cstdint>
#include <vector>

#include "pacq/diag/model.hpp"
#include "pacq/synth/generator.hpp"

namespace pacq::diag {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double lr = 1e-3;
  double lr_final_frac = 0.1;  // linear decay to lr * frac at the last epoch
  double clip_norm = 5.0;      // global gradient-norm ceiling, 0 disables
  double lambda_as = 1.0;
  double lambda_ef = 1.0;
  // Present each study fully unmasked and once more under a random view
  // subset (size-uniform, empty included: the environment's first prediction
  // and the empty-prior calibration both need a trained zero-view state).
  bool mask_augment = true;
  std::uint64_t seed = 1;
  int log_every = 0;  // epochs between progress lines on stderr, 0 = silent
};

struct TrainResult {
  DiagnosticModel model;  // best-validation checkpoint, frozen
  std::vector<double> train_loss;
  std::vector<double> val_bacc;  // mean of AS and EF-category bACC per epoch
  int best_epoch = 0;
  double best_val_bacc = 0.0;
  LossStats stats;
};

// Mean bACC over the two tasks at full acquisition on the indexed studies.
double validation_bacc(const DiagnosticModel& m, const synth::Dataset& data,
                       const std::vector<std::int64_t>& indices);

TrainResult train_diagnostic(const synth::Dataset& data, const synth::DatasetSplit& split,
                             const EncoderConfig& ecfg, const TrainConfig& tcfg);

}  // namespace pacq::diag
