#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pacq/diag/model.hpp"
#include "pacq/prob/pmf.hpp"
#include "pacq/synth/generator.hpp"

namespace pacq::env {

// Prediction source for the environment: the frozen model, optionally
// fronted by a per-study subset cache (see eval::SubsetCache).
class PredictorBase {
 public:
  virtual ~PredictorBase() = default;
  virtual prob::GaussianJoint predict(const synth::StudyRecord& study,
                                      const std::vector<std::uint8_t>& mask) const = 0;
  virtual int n_views() const = 0;
};

class ModelPredictor : public PredictorBase {
 public:
  explicit ModelPredictor(const diag::DiagnosticModel& model);
  prob::GaussianJoint predict(const synth::StudyRecord& study,
                              const std::vector<std::uint8_t>& mask) const override;
  int n_views() const override { return model_->cfg.n_views; }

 private:
  const diag::DiagnosticModel* model_;
};

struct Action {
  static constexpr int kStop = -1;
  int view = kStop;  // 0..N-1 selects that view

  static Action select(int v) { return Action{v}; }
  static Action stop() { return Action{}; }
  bool is_stop() const { return view < 0; }
};

struct EnvState {
  const synth::StudyRecord* study = nullptr;
  const PredictorBase* predictor = nullptr;
  const prob::CategoryGrid* grid = nullptr;
  std::vector<std::uint8_t> mask;          // acquisition bits, N entries
  std::vector<double> masked_embeddings;   // N x D, masked rows exactly zero
  int t = 0;                               // acquisitions so far
  prob::GaussianJoint last_joint;
  prob::JointPMF last_pmf;

  int n_views() const { return static_cast<int>(mask.size()); }
  // Actor features: flattened masked embeddings then the raw mask bits.
  std::vector<double> policy_input() const;
};

struct Transition {
  EnvState next;
  double dense_reward = 0.0;
  double sparse_reward = 0.0;
  bool done = false;
  prob::GaussianJoint info;  // prediction after the action
};

EnvState reset(const synth::StudyRecord& study, const PredictorBase& predictor,
               const prob::CategoryGrid& grid);

Transition step(const EnvState& state, Action action, double cost_lambda,
                const std::vector<double>& costs);

std::vector<double> unit_costs(int n_views);

using PolicyFn = std::function<Action(const EnvState&)>;

struct StepRecord {
  int action = Action::kStop;  // view index, kStop, or kExhausted
  double dense_reward = 0.0;
  static constexpr int kExhausted = -2;
};

struct EpisodeTrace {
  std::int64_t study_id = 0;
  std::vector<StepRecord> steps;
  std::vector<int> acquired_order;
  double sparse_reward = 0.0;
  double total_dense = 0.0;
  bool exhausted = false;
  prob::GaussianJoint final_joint;
  int pred_as = 0, pred_ef = 0;
  int y_as = 0, y_ef_cat = 0;

  int acquired_count() const { return static_cast<int>(acquired_order.size()); }
};

EpisodeTrace run_episode(const synth::StudyRecord& study, const PredictorBase& predictor,
                         const PolicyFn& policy, double cost_lambda,
                         const std::vector<double>& costs, const prob::CategoryGrid& grid);

// One structured record per line; view indices rendered as view names.
void save_traces(const std::vector<EpisodeTrace>& traces, const std::string& path);

// Inverse of save_traces. Covariance terms of final_joint are not persisted
// and come back zeroed; everything pathway building needs survives.
std::vector<EpisodeTrace> load_traces(const std::string& path);

}  // namespace pacq::env
