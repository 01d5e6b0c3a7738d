#include "pacq/synth/generator.hpp"

#include <cmath>
#include <numeric>

namespace pacq::synth {

std::string view_name(int v) {
  return v >= 0 && v < kDefaultViews ? kViewNames[v] : "V" + std::to_string(v);
}

GeneratorConfig GeneratorConfig::defaults(std::int64_t n_patients, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n_patients = n_patients;
  cfg.seed = seed;
  cfg.view_signal = {
      {0.00, 0.85},  // AP2
      {0.45, 0.45},  // AP3
      {0.00, 0.95},  // AP4
      {0.85, 0.25},  // PLAX
      {0.95, 0.00},  // PSAX-Ao
  };
  return cfg;
}

void GeneratorConfig::validate() const {
  if (n_views < 2) throw ConfigError("generator: n_views must be >= 2");
  if (embed_dim < 2) throw ConfigError("generator: embed_dim must be >= 2");
  if (n_classes < 2) throw ConfigError("generator: n_classes must be >= 2");
  if (n_patients < 0) throw ConfigError("generator: n_patients must be >= 0");
  if (!(noise_std > 0.0)) throw ConfigError("generator: noise_std must be > 0");
  if (quality_spread < 0.0) throw ConfigError("generator: quality_spread must be >= 0");
  if (static_cast<int>(view_signal.size()) != n_views)
    throw ConfigError("generator: view_signal must have one entry per view");
  bool any_as = false, any_ef = false;
  for (const auto& vs : view_signal) {
    if (vs.w_as < 0.0 || vs.w_as > 1.0 || vs.w_ef < 0.0 || vs.w_ef > 1.0)
      throw ConfigError("generator: view signal weights must lie in [0,1]");
    any_as = any_as || vs.w_as > 0.0;
    any_ef = any_ef || vs.w_ef > 0.0;
  }
  if (!any_as || !any_ef)
    throw ConfigError("generator: need at least one AS- and one EF-informative view");
}

ViewDirections view_directions(const GeneratorConfig& cfg) {
  ViewDirections d;
  d.n_views = cfg.n_views;
  d.embed_dim = cfg.embed_dim;
  std::size_t sz = static_cast<std::size_t>(cfg.n_views) * cfg.embed_dim;
  d.a.resize(sz);
  d.b.resize(sz);
  Rng rng(cfg.seed, "view-directions");
  int dim = cfg.embed_dim;
  for (int v = 0; v < cfg.n_views; ++v) {
    double* a = &d.a[static_cast<std::size_t>(v) * dim];
    double* b = &d.b[static_cast<std::size_t>(v) * dim];
    double na = 0.0;
    for (int i = 0; i < dim; ++i) {
      a[i] = rng.normal();
      na += a[i] * a[i];
    }
    na = std::sqrt(na);
    for (int i = 0; i < dim; ++i) a[i] /= na;
    // B orthogonal to A so the two label axes never interfere
    double dot = 0.0;
    for (int i = 0; i < dim; ++i) {
      b[i] = rng.normal();
      dot += b[i] * a[i];
    }
    double nb = 0.0;
    for (int i = 0; i < dim; ++i) {
      b[i] -= dot * a[i];
      nb += b[i] * b[i];
    }
    nb = std::sqrt(nb);
    for (int i = 0; i < dim; ++i) b[i] /= nb;
  }
  return d;
}

Dataset generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  auto dirs = view_directions(cfg);
  auto grid = prob::CategoryGrid::defaults(cfg.n_classes);

  Dataset ds;
  ds.cfg = cfg;
  ds.studies.resize(cfg.n_patients);
  int dim = cfg.embed_dim;
  int n_cells = cfg.n_classes * grid.n_ef();

  for (std::int64_t id = 0; id < cfg.n_patients; ++id) {
    Rng rng(cfg.seed, "study", static_cast<std::uint64_t>(id));
    StudyRecord& s = ds.studies[id];
    s.study_id = id;

    // Uniform over label-grid cells, Beta(2,2) within each bin.
    int cell = static_cast<int>(rng.index(n_cells));
    int ci = cell / grid.n_ef();
    int cj = cell % grid.n_ef();
    double alo = grid.as_edges[ci], ahi = grid.as_edges[ci + 1];
    double elo = grid.ef_edges[cj], ehi = grid.ef_edges[cj + 1];
    s.y_as_value = alo + (ahi - alo) * rng.beta22();
    s.y_ef = elo + (ehi - elo) * rng.beta22();
    s.y_as_class = grid.as_class_of(s.y_as_value);

    s.qualities.resize(cfg.n_views);
    for (int v = 0; v < cfg.n_views; ++v) {
      double q = 1.0;
      if (cfg.quality_spread > 0.0)
        q = std::clamp(1.0 + rng.normal(0.0, cfg.quality_spread), 0.0, 2.0);
      s.qualities[v] = q;
    }

    double g_as = 2.0 * s.y_as_value - 1.0;
    double g_ef = 2.0 * s.y_ef - 1.0;
    s.embeddings.resize(static_cast<std::size_t>(cfg.n_views) * dim);
    for (int v = 0; v < cfg.n_views; ++v) {
      const auto& w = cfg.view_signal[v];
      const double* a = &dirs.a[static_cast<std::size_t>(v) * dim];
      const double* b = &dirs.b[static_cast<std::size_t>(v) * dim];
      double* row = &s.embeddings[static_cast<std::size_t>(v) * dim];
      for (int i = 0; i < dim; ++i)
        row[i] = s.qualities[v] * (w.w_as * a[i] * g_as + w.w_ef * b[i] * g_ef) +
                 rng.normal(0.0, cfg.noise_std);
    }
  }
  return ds;
}

DatasetSplit split_dataset(const std::vector<StudyRecord>& studies,
                           std::array<double, 3> ratios, std::uint64_t seed) {
  double total = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("split_dataset: ratios must sum to 1");
  std::vector<std::int64_t> ids(studies.size());
  for (std::size_t i = 0; i < studies.size(); ++i) ids[i] = studies[i].study_id;
  Rng rng(seed, "split");
  rng.shuffle(ids);
  std::size_t n = ids.size();
  auto n_train = static_cast<std::size_t>(std::llround(n * ratios[0]));
  auto n_val = static_cast<std::size_t>(std::llround(n * ratios[1]));
  if (n_train + n_val > n) n_val = n - n_train;
  DatasetSplit sp;
  sp.train.assign(ids.begin(), ids.begin() + n_train);
  sp.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  sp.test.assign(ids.begin() + n_train + n_val, ids.end());
  return sp;
}

}  // namespace pacq::synth
