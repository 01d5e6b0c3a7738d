#include "pacq/env/episode.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "pacq/common/errors.hpp"

namespace pacq::env {

ModelPredictor::ModelPredictor(const diag::DiagnosticModel& model) : model_(&model) {
  if (!model.frozen) throw ConfigError("env: diagnostic model must be frozen");
}

prob::GaussianJoint ModelPredictor::predict(const synth::StudyRecord& study,
                                            const std::vector<std::uint8_t>& mask) const {
  return diag::predict_joint(*model_, study, mask);
}

std::vector<double> EnvState::policy_input() const {
  std::vector<double> x = masked_embeddings;
  x.reserve(x.size() + mask.size());
  for (auto m : mask) x.push_back(static_cast<double>(m));
  return x;
}

std::vector<double> unit_costs(int n_views) {
  return std::vector<double>(static_cast<std::size_t>(n_views), 1.0);
}

EnvState reset(const synth::StudyRecord& study, const PredictorBase& predictor,
               const prob::CategoryGrid& grid) {
  EnvState s;
  s.study = &study;
  s.predictor = &predictor;
  s.grid = &grid;
  int n = predictor.n_views();
  s.mask.assign(static_cast<std::size_t>(n), 0);
  s.masked_embeddings.assign(study.embeddings.size(), 0.0);
  s.t = 0;
  s.last_joint = predictor.predict(study, s.mask);
  s.last_pmf = prob::discretize(s.last_joint, grid);
  return s;
}

Transition step(const EnvState& state, Action action, double cost_lambda,
                const std::vector<double>& costs) {
  if (state.study == nullptr || state.predictor == nullptr || state.grid == nullptr)
    throw ConfigError("env: step on an uninitialized state");
  int n = state.n_views();
  if (static_cast<int>(costs.size()) != n)
    throw ConfigError("env: cost vector must have one entry per view");
  if (cost_lambda < 0.0) throw ConfigError("env: cost lambda must be non-negative");

  Transition tr;
  if (action.is_stop()) {
    tr.next = state;
    auto [pa, pe] = prob::predicted_classes(state.last_pmf);
    double correct = (pa == state.study->y_as_class ? 1.0 : 0.0) +
                     (pe == state.grid->ef_category_of(state.study->y_ef) ? 1.0 : 0.0);
    double cost_sum = 0.0;
    for (int v = 0; v < n; ++v)
      if (state.mask[v]) cost_sum += costs[v];
    tr.sparse_reward = correct - cost_lambda * cost_sum;
    tr.done = true;
    tr.info = state.last_joint;
    return tr;
  }

  int v = action.view;
  if (v < 0 || v >= n) throw InvalidActionError("env: view index out of range");
  if (state.mask[v]) throw InvalidActionError("env: view already acquired");

  tr.next = state;
  tr.next.mask[v] = 1;
  int d = static_cast<int>(state.study->embeddings.size()) / n;
  std::copy(state.study->embeddings.begin() + static_cast<std::ptrdiff_t>(v) * d,
            state.study->embeddings.begin() + static_cast<std::ptrdiff_t>(v + 1) * d,
            tr.next.masked_embeddings.begin() + static_cast<std::ptrdiff_t>(v) * d);
  tr.next.t = state.t + 1;
  tr.info = state.predictor->predict(*state.study, tr.next.mask);
  tr.next.last_joint = tr.info;
  tr.next.last_pmf = prob::discretize(tr.info, *state.grid);
  tr.dense_reward = prob::js_divergence(state.last_pmf, tr.next.last_pmf);
  return tr;
}

EpisodeTrace run_episode(const synth::StudyRecord& study, const PredictorBase& predictor,
                         const PolicyFn& policy, double cost_lambda,
                         const std::vector<double>& costs, const prob::CategoryGrid& grid) {
  EpisodeTrace trace;
  trace.study_id = study.study_id;
  trace.y_as = study.y_as_class;
  trace.y_ef_cat = grid.ef_category_of(study.y_ef);

  EnvState s = reset(study, predictor, grid);
  int n = s.n_views();

  for (int decision = 0; decision <= n; ++decision) {
    Action a = policy(s);
    if (!a.is_stop() && s.t == n) {
      // no legal Select remains and the policy refuses Stop
      trace.steps.push_back({StepRecord::kExhausted, 0.0});
      trace.exhausted = true;
      trace.sparse_reward = 0.0;
      break;
    }
    Transition tr = step(s, a, cost_lambda, costs);
    trace.steps.push_back({a.is_stop() ? Action::kStop : a.view, tr.dense_reward});
    trace.total_dense += tr.dense_reward;
    trace.final_joint = tr.info;
    if (a.is_stop()) {
      trace.sparse_reward = tr.sparse_reward;
      s = std::move(tr.next);
      break;
    }
    trace.acquired_order.push_back(a.view);
    s = std::move(tr.next);
  }

  auto [pa, pe] = prob::predicted_classes(s.last_pmf);
  trace.pred_as = pa;
  trace.pred_ef = pe;
  return trace;
}

void save_traces(const std::vector<EpisodeTrace>& traces, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::Other, "cannot open trace file: " + path);
  for (const auto& t : traces) {
    nlohmann::json rec;
    rec["study"] = t.study_id;
    auto name = [](int a) -> std::string {
      if (a == StepRecord::kExhausted) return "exhausted";
      if (a == Action::kStop) return "stop";
      return synth::view_name(a);
    };
    std::vector<std::string> actions;
    std::vector<double> dense;
    for (const auto& s : t.steps) {
      actions.push_back(name(s.action));
      dense.push_back(s.dense_reward);
    }
    rec["actions"] = actions;
    rec["dense"] = dense;
    rec["sparse"] = t.sparse_reward;
    rec["exhausted"] = t.exhausted;
    rec["count"] = t.acquired_count();
    rec["pred"] = {t.pred_as, t.pred_ef};
    rec["label"] = {t.y_as, t.y_ef_cat};
    rec["mu"] = {t.final_joint.mu.x, t.final_joint.mu.y};
    out << rec.dump() << "\n";
  }
  out.close();
  if (!out) throw DataError(DataError::Kind::Other, "failed writing trace file: " + path);
}

std::vector<EpisodeTrace> load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::Other, "cannot open trace file: " + path);

  auto action_of = [&](const std::string& name) {
    if (name == "stop") return Action::kStop;
    if (name == "exhausted") return StepRecord::kExhausted;
    for (int v = 0; v < synth::kDefaultViews; ++v)
      if (name == synth::kViewNames[v]) return v;
    if (name.size() > 1 && name[0] == 'V') {
      try {
        return std::stoi(name.substr(1));
      } catch (const std::exception&) {
      }
    }
    throw DataError(DataError::Kind::Other, "trace file: unknown action '" + name + "'");
  };

  std::vector<EpisodeTrace> traces;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded())
      throw DataError(DataError::Kind::Other,
                      "trace file: bad record at line " + std::to_string(lineno));
    EpisodeTrace t;
    t.study_id = rec.at("study").get<std::int64_t>();
    auto actions = rec.at("actions").get<std::vector<std::string>>();
    auto dense = rec.at("dense").get<std::vector<double>>();
    if (actions.size() != dense.size())
      throw DataError(DataError::Kind::Other,
                      "trace file: actions/dense length mismatch at line " +
                          std::to_string(lineno));
    for (std::size_t i = 0; i < actions.size(); ++i) {
      int a = action_of(actions[i]);
      t.steps.push_back({a, dense[i]});
      if (a >= 0) {
        t.acquired_order.push_back(a);
        t.total_dense += dense[i];
      }
    }
    t.sparse_reward = rec.at("sparse").get<double>();
    t.exhausted = rec.at("exhausted").get<bool>();
    t.pred_as = rec.at("pred").at(0).get<int>();
    t.pred_ef = rec.at("pred").at(1).get<int>();
    t.y_as = rec.at("label").at(0).get<int>();
    t.y_ef_cat = rec.at("label").at(1).get<int>();
    t.final_joint.mu = {rec.at("mu").at(0).get<double>(), rec.at("mu").at(1).get<double>()};
    if (rec.at("count").get<int>() != t.acquired_count())
      throw DataError(DataError::Kind::Other,
                      "trace file: count mismatch at line " + std::to_string(lineno));
    traces.push_back(std::move(t));
  }
  return traces;
}

}  // namespace pacq::env
