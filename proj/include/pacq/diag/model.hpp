#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pacq/numerics/tensor.hpp"
#include "pacq/prob/pmf.hpp"
#include "pacq/synth/generator.hpp"

namespace pacq::diag {

struct EncoderConfig {
  int layers = 3;
  int heads = 4;
  int token_dim = 32;
  int ff_dim = 128;
  int input_dim = 32;  // embedding dim of the dataset
  int n_views = 5;
  int n_classes = 3;
  int head_hidden = 64;

  void validate() const;
};

// Marginal stds are bounded to (sigma_min, 1) and |rho| to rho_max so the
// reconstructed covariance is always comfortably positive definite.
inline constexpr double kSigmaMin = 1e-3;
inline constexpr double kRhoMax = 0.995;

struct EncoderLayer {
  num::Tensor ln1_g, ln1_b;
  num::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  num::Tensor ln2_g, ln2_b;
  num::Tensor w1, b1, w2, b2;
};

struct DiagnosticModel {
  EncoderConfig cfg;
  num::Tensor w_in, b_in;      // input projection D -> token_dim
  num::Tensor task_tokens;     // [2 x token_dim], row 0 = AS, row 1 = EF
  num::Tensor view_embed;      // [n_views x token_dim] slot embeddings
  std::vector<EncoderLayer> layers;
  num::Tensor lnf_g, lnf_b;
  num::Tensor wh1, bh1, wh2, bh2;  // mean branch
  num::Tensor wg1, bg1, wg2, bg2;  // covariance branch
  bool frozen = false;

  std::vector<num::Tensor> parameters() const;
};

DiagnosticModel init_model(const EncoderConfig& cfg, std::uint64_t seed);

// Task-token outputs for a batch of masked states. flat_views holds the B*N
// view rows (masked rows zeroed), view_mask the B*N acquisition bits.
// Returns [B x 2*token_dim].
num::Tensor encode_tokens(const DiagnosticModel& m, const num::Tensor& flat_views,
                          const std::vector<std::uint8_t>& view_mask, int batch);

struct HeadOut {
  num::Tensor mu;     // [B x 2] in (0,1)
  num::Tensor sigma;  // [B x 2] marginal stds in (sigma_min, 1)
  num::Tensor rho;    // [B x 1] in (-rho_max, rho_max)
};

HeadOut head_forward(const DiagnosticModel& m, const num::Tensor& enc);

// Pure inference (no tape). masks is B*N acquisition bits over the given
// studies; masked view contents are ignored entirely.
std::vector<prob::GaussianJoint> predict_batch(
    const DiagnosticModel& m, const std::vector<const synth::StudyRecord*>& studies,
    const std::vector<std::uint8_t>& masks);

prob::GaussianJoint predict_joint(const DiagnosticModel& m,
                                  const synth::StudyRecord& study,
                                  const std::vector<std::uint8_t>& mask);

// Batched training losses.
struct LossStats {
  long as_mass_clamps = 0;
  long ef_var_clamps = 0;
};

num::Tensor loss_as_batch(const HeadOut& h, const std::vector<int>& classes,
                          const prob::CategoryGrid& grid, LossStats* stats = nullptr);
num::Tensor loss_ef_batch(const HeadOut& h, const std::vector<double>& y_ef,
                          LossStats* stats = nullptr);

// Scalar reference forms.
double loss_as(const prob::GaussianJoint& joint, int y_as_class,
               const prob::CategoryGrid& grid);
double loss_ef(const prob::GaussianJoint& joint, double y_ef);
double loss_total(const prob::GaussianJoint& joint, int y_as_class, double y_ef,
                  double lambda_as, double lambda_ef,
                  const prob::CategoryGrid& grid);

void save_model(const DiagnosticModel& m, const std::string& path);
DiagnosticModel load_model(const std::string& path);

}  // namespace pacq::diag
