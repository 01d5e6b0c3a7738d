#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pacq/common/errors.hpp"
#include "pacq/common/rng.hpp"
#include "pacq/prob/pmf.hpp"

namespace pacq::synth {

// Fixed view order throughout the project.
inline constexpr int kDefaultViews = 5;
inline const char* const kViewNames[kDefaultViews] = {"AP2", "AP3", "AP4", "PLAX",
                                                      "PSAX-Ao"};

// Named echo views for the default five, generic labels beyond them.
std::string view_name(int v);

struct ViewSignal {
  double w_as = 0.0;
  double w_ef = 0.0;
};

struct GeneratorConfig {
  int n_views = 5;
  int embed_dim = 32;
  int n_classes = 3;
  std::int64_t n_patients = 0;
  std::vector<ViewSignal> view_signal;  // size n_views
  double quality_spread = 0.35;
  double noise_std = 0.55;
  std::uint64_t seed = 1;

  // AP2/AP4 carry EF, PLAX/PSAX-Ao carry AS, AP3 carries a bit of both.
  static GeneratorConfig defaults(std::int64_t n_patients = 0, std::uint64_t seed = 1);

  void validate() const;
};

struct StudyRecord {
  std::int64_t study_id = 0;
  std::vector<double> embeddings;  // n_views x embed_dim, row-major
  double y_as_value = 0.0;
  int y_as_class = 0;
  double y_ef = 0.0;
  std::vector<double> qualities;  // hidden generative truth, oracle only

  double emb(int view, int d, int embed_dim) const {
    return embeddings[static_cast<std::size_t>(view) * embed_dim + d];
  }
};

struct Dataset {
  GeneratorConfig cfg;
  std::vector<StudyRecord> studies;
};

struct DatasetSplit {
  std::vector<std::int64_t> train, val, test;
};

// Per-view unit directions A_v (AS axis) and B_v (EF axis, orthogonal to
// A_v), derived deterministically from cfg.seed.
struct ViewDirections {
  int n_views = 0;
  int embed_dim = 0;
  std::vector<double> a;  // n_views x embed_dim
  std::vector<double> b;
};

ViewDirections view_directions(const GeneratorConfig& cfg);

Dataset generate_dataset(const GeneratorConfig& cfg);

DatasetSplit split_dataset(const std::vector<StudyRecord>& studies,
                           std::array<double, 3> ratios, std::uint64_t seed);

inline DatasetSplit split_dataset(const std::vector<StudyRecord>& studies,
                                  std::uint64_t seed) {
  return split_dataset(studies, {0.70, 0.15, 0.15}, seed);
}

}  // namespace pacq::synth
