#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pacq/common/rng.hpp"
#include "pacq/eval/cache.hpp"
#include "pacq/eval/evaluate.hpp"
#include "pacq/eval/metrics.hpp"
#include "pacq/eval/pathways.hpp"
#include "pacq/eval/sweep.hpp"
#include "pacq/rl/policy.hpp"
#include "pacq/synth/generator.hpp"

using namespace pacq;
using namespace pacq::eval;

namespace {

std::string tmp_path(const std::string& name) { return "/tmp/pacq_test_" + name; }

struct FakePredictor : env::PredictorBase {
  using Fn = std::function<prob::GaussianJoint(const synth::StudyRecord&,
                                               const std::vector<std::uint8_t>&)>;
  Fn fn;
  int n = 5;
  mutable long calls = 0;

  prob::GaussianJoint predict(const synth::StudyRecord& study,
                              const std::vector<std::uint8_t>& mask) const override {
    ++calls;
    return fn(study, mask);
  }
  int n_views() const override { return n; }
};

prob::GaussianJoint tight_at(double mu_as, double mu_ef) {
  prob::GaussianJoint j;
  j.mu = {mu_as, mu_ef};
  j.sigma = {1e-6, 0.0, 0.0, 1e-6};
  return j;
}

prob::GaussianJoint wrong_for(const synth::StudyRecord& s) {
  double as = std::fmod(s.y_as_value + 1.0 / 3.0, 1.0);
  double ef = s.y_ef < 0.45 ? 0.75 : 0.20;
  return tight_at(as, ef);
}

int mask_count(const std::vector<std::uint8_t>& m) {
  return static_cast<int>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

}  // namespace

TEST_CASE("balanced accuracy matches hand-built confusion matrices") {
  CHECK(balanced_accuracy({0, 1, 2}, {0, 1, 2}, 3) == 1.0);
  // Constant predictor on balanced classes: one recall 1, two recalls 0.
  CHECK(balanced_accuracy({0, 0, 0, 0, 0, 0}, {0, 0, 1, 1, 2, 2}, 3) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // Recalls (1.0, 0.5, 0.0).
  CHECK(balanced_accuracy({0, 0, 1, 0, 1, 1}, {0, 0, 1, 1, 2, 2}, 3) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Absent class 2 is excluded from the mean.
  CHECK(balanced_accuracy({0, 1, 1, 1}, {0, 0, 1, 1}, 3) ==
        doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(balanced_accuracy({}, {}, 3), ShapeError);
  CHECK_THROWS_AS(balanced_accuracy({0}, {0, 1}, 3), ShapeError);
  CHECK_THROWS_AS(balanced_accuracy({3}, {0}, 3), ShapeError);
}

TEST_CASE("balanced accuracy of random predictions sits at chance") {
  Rng rng(123, "chance");
  std::vector<int> preds, labels;
  for (int i = 0; i < 10000; ++i) {
    preds.push_back(static_cast<int>(rng.index(3)));
    labels.push_back(i % 3);
  }
  CHECK(balanced_accuracy(preds, labels, 3) == doctest::Approx(1.0 / 3.0).epsilon(0.06));
  CHECK(std::fabs(balanced_accuracy(preds, labels, 3) - 1.0 / 3.0) < 0.02);
}

TEST_CASE("weighted f1 matches the hand-computed cases") {
  CHECK(weighted_f1({0, 1, 2}, {0, 1, 2}, 3) == 1.0);
  // All predictions class 0 on balanced labels: F1_0 = 2*(1/3)/(4/3) = 1/2,
  // weighted by support 1/3; classes 1 and 2 contribute 0.
  CHECK(weighted_f1({0, 0, 0, 0, 0, 0}, {0, 0, 1, 1, 2, 2}, 3) ==
        doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  std::vector<int> labels, preds;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 3);
  preds = labels;
  preds[57] = (labels[57] + 1) % 3;
  CHECK(weighted_f1(preds, labels, 3) > 0.98);
  CHECK_THROWS_AS(weighted_f1({}, {}, 3), ShapeError);
}

TEST_CASE("bmae averages per-true-category MAE in EF points") {
  // Category MAEs 4, 6, 8 points -> 6.0.
  std::vector<double> truth = {0.30, 0.45, 0.60};
  std::vector<double> pred = {0.34, 0.51, 0.68};
  std::vector<int> cats = {0, 1, 2};
  CHECK(bmae(pred, truth, cats) == doctest::Approx(6.0).epsilon(1e-9));

  CHECK(bmae({0.5, 0.7}, {0.5, 0.7}, {1, 2}) == 0.0);
  // Single category, constant 5-point error.
  CHECK(bmae({0.25, 0.35}, {0.30, 0.30}, {0, 0}) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK_THROWS_AS(bmae({}, {}, {}), ShapeError);
}

TEST_CASE("reports carry exact ratio and mean-bacc arithmetic") {
  auto grid = prob::CategoryGrid::defaults(3);
  std::vector<StudyOutcome> outs;
  for (int i = 0; i < 6; ++i) {
    StudyOutcome o;
    o.pred_as = i % 3;
    o.y_as = i % 3;
    o.pred_ef = (i % 3 + (i == 0 ? 1 : 0)) % 3;
    o.y_ef = i % 3;
    o.mu_ef = 0.45;
    o.y_ef_value = 0.47;
    o.count = i % 2 ? 3 : 2;
    outs.push_back(o);
  }
  auto r = make_report(outs, 5, grid);
  CHECK(r.mean_bacc == 0.5 * (r.bacc_as + r.bacc_ef));
  CHECK(r.mean_count == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(r.ratio == 100.0 * r.mean_count / 5.0);
  CHECK(r.bacc_as == 100.0);
  CHECK(r.n_studies == 6);
  CHECK_THROWS_AS(make_report({}, 5, grid), ShapeError);

  MetricsReport a, b;
  a.bacc_as = 60.0;
  b.bacc_as = 80.0;
  a.mean_count = 2.0;
  b.mean_count = 4.0;
  auto m = mean_report({a, b});
  auto s = std_report({a, b});
  CHECK(m.bacc_as == 70.0);
  CHECK(m.mean_count == 3.0);
  CHECK(s.bacc_as == 10.0);
  CHECK(s.mean_count == 1.0);
}

TEST_CASE("subset cache memoizes by study and mask") {
  auto cfg = synth::GeneratorConfig::defaults(4, 11);
  auto data = synth::generate_dataset(cfg);
  FakePredictor inner;
  inner.fn = [](const synth::StudyRecord& s, const std::vector<std::uint8_t>& m) {
    return tight_at(s.y_as_value, static_cast<double>(mask_count(m)) / 10.0 + 0.2);
  };
  SubsetCache cache(inner);

  std::vector<std::uint8_t> m1 = {1, 0, 1, 0, 0}, m2 = {0, 1, 1, 0, 0};
  auto j1 = cache.predict(data.studies[0], m1);
  CHECK(inner.calls == 1);
  auto j1b = cache.predict(data.studies[0], m1);
  CHECK(inner.calls == 1);
  CHECK(cache.hits() == 1);
  CHECK(j1.mu.x == j1b.mu.x);
  CHECK(j1.mu.y == j1b.mu.y);

  cache.predict(data.studies[0], m2);
  CHECK(inner.calls == 2);
  cache.predict(data.studies[1], m1);
  CHECK(inner.calls == 3);
  CHECK(cache.size() == 3);
  CHECK_THROWS_AS(cache.predict(data.studies[0], {1, 0}), ConfigError);
}

TEST_CASE("random-k at k=N collapses to the full-study evaluation") {
  auto cfg = synth::GeneratorConfig::defaults(150, 29);
  auto data = synth::generate_dataset(cfg);
  auto grid = prob::CategoryGrid::defaults(3);
  std::vector<std::int64_t> ids;
  for (const auto& s : data.studies) ids.push_back(s.study_id);

  FakePredictor pred;
  pred.fn = [](const synth::StudyRecord& s, const std::vector<std::uint8_t>& m) {
    return mask_count(m) >= 2 ? tight_at(s.y_as_value, s.y_ef) : wrong_for(s);
  };

  auto rk = eval_random_k(data, ids, pred, 5, 5, 77, grid);
  auto full = eval_fixed_subset(data, ids, pred, std::vector<std::uint8_t>(5, 1), grid);
  CHECK(rk.mean.mean_bacc == full.mean_bacc);
  CHECK(rk.mean.bmae == full.bmae);
  CHECK(rk.stddev.mean_bacc == 0.0);
  CHECK(rk.stddev.bmae == 0.0);
  CHECK(rk.mean.ratio == 100.0);

  auto r1 = eval_random_k(data, ids, pred, 1, 3, 77, grid);
  auto r2 = eval_random_k(data, ids, pred, 2, 3, 77, grid);
  CHECK(r1.mean.mean_bacc == 0.0);
  CHECK(r2.mean.mean_bacc == 100.0);
  CHECK(r1.mean.mean_count == 1.0);
  CHECK(r1.mean.ratio == 20.0);

  CHECK_THROWS_AS(eval_random_k(data, ids, pred, 0, 3, 1, grid), ConfigError);
  CHECK_THROWS_AS(eval_random_k(data, ids, pred, 6, 3, 1, grid), ConfigError);

  auto again = eval_random_k(data, ids, pred, 2, 3, 77, grid);
  CHECK(again.mean.mean_bacc == r2.mean.mean_bacc);
}

TEST_CASE("popwise-k picks the validation argmax and applies it to test") {
  auto cfg = synth::GeneratorConfig::defaults(200, 31);
  auto data = synth::generate_dataset(cfg);
  auto grid = prob::CategoryGrid::defaults(3);
  auto split = synth::split_dataset(data.studies, 31);

  FakePredictor gated;
  gated.fn = [](const synth::StudyRecord& s, const std::vector<std::uint8_t>& m) {
    return m[3] ? tight_at(s.y_as_value, s.y_ef) : wrong_for(s);
  };

  auto p1 = eval_popwise_k(data, split.val, split.test, gated, 1, grid);
  CHECK(p1.subset == std::vector<int>{3});
  CHECK(p1.val_mean_bacc == 100.0);
  CHECK(p1.report.mean_bacc == 100.0);
  CHECK(p1.report.mean_count == 1.0);

  // All subsets containing view 3 tie at 100; lexicographic -> {0,3}.
  auto p2 = eval_popwise_k(data, split.val, split.test, gated, 2, grid);
  CHECK(p2.subset == std::vector<int>{0, 3});

  // Argmax contract: no other pair beats the chosen one on validation.
  for (int a = 0; a < 5; ++a)
    for (int b = a + 1; b < 5; ++b) {
      std::vector<std::uint8_t> mask(5, 0);
      mask[a] = mask[b] = 1;
      auto rep = eval_fixed_subset(data, split.val, gated, mask, grid);
      CHECK(rep.mean_bacc <= p2.val_mean_bacc);
    }

  auto p5 = eval_popwise_k(data, split.val, split.test, gated, 5, grid);
  auto full = eval_fixed_subset(data, split.test, gated, std::vector<std::uint8_t>(5, 1), grid);
  CHECK(p5.report.mean_bacc == full.mean_bacc);
  CHECK(p5.report.bmae == full.bmae);
}

TEST_CASE("rl evaluation covers stop-now, acquire-all, and fixed budgets") {
  auto cfg = synth::GeneratorConfig::defaults(300, 41);
  auto data = synth::generate_dataset(cfg);
  auto grid = prob::CategoryGrid::defaults(3);
  std::vector<std::int64_t> ids;
  for (const auto& s : data.studies) ids.push_back(s.study_id);

  FakePredictor pred;
  pred.fn = [](const synth::StudyRecord& s, const std::vector<std::uint8_t>& m) {
    return mask_count(m) >= 1 ? tight_at(s.y_as_value, s.y_ef) : tight_at(0.5, 0.45);
  };

  auto stop_now = rl::init_policy(165, 6, 16, 3);
  stop_now.ab3.values()[5] = 50.0;
  auto ev0 = eval_rl(data, ids, pred, stop_now, 0.1, grid);
  CHECK(ev0.report.ratio == 0.0);
  CHECK(ev0.report.mean_count == 0.0);
  CHECK(ev0.report.mean_bacc == doctest::Approx(100.0 / 3.0).epsilon(1e-9));
  for (const auto& t : ev0.traces) CHECK(t.acquired_count() == 0);

  auto take_all = rl::init_policy(165, 6, 16, 3);
  take_all.ab3.values()[5] = -50.0;
  auto ev5 = eval_rl(data, ids, pred, take_all, 0.1, grid);
  auto full = eval_fixed_subset(data, ids, pred, std::vector<std::uint8_t>(5, 1), grid);
  CHECK(ev5.report.ratio == 100.0);
  CHECK(ev5.report.mean_bacc == full.mean_bacc);
  CHECK(ev5.report.bmae == full.bmae);
  CHECK(ev5.mean_reward == doctest::Approx(2.0 - 0.1 * 5.0).epsilon(1e-9));
  for (const auto& t : ev5.traces) CHECK_FALSE(t.exhausted);

  auto nets = rl::init_policy(165, 6, 16, 9);
  for (int k = 1; k <= 5; ++k) {
    auto evk = eval_rl_budget(data, ids, pred, nets, k, 0.1, grid);
    CHECK(evk.report.mean_count == static_cast<double>(k));
    CHECK(evk.report.ratio == 100.0 * k / 5.0);
    for (const auto& t : evk.traces) CHECK(t.acquired_count() == k);
    CHECK(evk.report.mean_bacc == 100.0);
  }

  auto sto = eval_rl(data, ids, pred, nets, 0.1, grid, false, 5);
  auto sto2 = eval_rl(data, ids, pred, nets, 0.1, grid, false, 5);
  CHECK(sto.report.mean_bacc == sto2.report.mean_bacc);
  CHECK(sto.report.mean_count == sto2.report.mean_count);
}

TEST_CASE("pathway trees aggregate by set, conserve flow, and export") {
  auto cfg = synth::GeneratorConfig::defaults(80, 53);
  auto data = synth::generate_dataset(cfg);
  auto grid = prob::CategoryGrid::defaults(3);
  std::vector<std::int64_t> ids;
  for (const auto& s : data.studies) ids.push_back(s.study_id);

  FakePredictor pred;
  pred.fn = [](const synth::StudyRecord& s, const std::vector<std::uint8_t>& m) {
    return mask_count(m) >= 2 ? tight_at(s.y_as_value, s.y_ef) : tight_at(0.5, 0.45);
  };
  auto nets = rl::init_policy(165, 6, 16, 9);
  auto ev = eval_rl_budget(data, ids, pred, nets, 2, 0.1, grid);

  auto tree = build_pathway_tree(ev.traces, 5);
  CHECK(tree.n_studies == 80);
  CHECK(tree.nodes.at(0).reaching == 80);
  CHECK(tree.nodes.at(0).terminating == 0);
  CHECK_NOTHROW(check_flow(tree));
  long terms = 0;
  for (const auto& [key, node] : tree.nodes) {
    terms += node.terminating;
    if (node.terminating > 0) {
      CHECK(mask_count(std::vector<std::uint8_t>{
                static_cast<std::uint8_t>(key & 1), static_cast<std::uint8_t>(key >> 1 & 1),
                static_cast<std::uint8_t>(key >> 2 & 1), static_cast<std::uint8_t>(key >> 3 & 1),
                static_cast<std::uint8_t>(key >> 4 & 1)}) == 2);
      CHECK(node.bacc_as == 100.0);
    }
  }
  CHECK(terms == 80);

  // Order collapses into one set node; edges keep the order.
  env::EpisodeTrace ta, tb;
  ta.acquired_order = {0, 1};
  tb.acquired_order = {1, 0};
  ta.pred_as = ta.y_as = tb.pred_as = tb.y_as = 1;
  ta.pred_ef = ta.y_ef_cat = tb.pred_ef = tb.y_ef_cat = 2;
  auto small = build_pathway_tree({ta, tb}, 2);
  CHECK(small.nodes.at(3).reaching == 2);
  CHECK(small.nodes.at(3).terminating == 2);
  CHECK(small.nodes.at(3).bacc_as == 100.0);
  CHECK(small.edges.at({0u, 0}) == 1);
  CHECK(small.edges.at({0u, 1}) == 1);
  CHECK(small.edges.at({1u, 1}) == 1);
  CHECK(small.edges.at({2u, 0}) == 1);
  CHECK_NOTHROW(check_flow(small));

  auto broken = small;
  broken.nodes.at(1).reaching += 1;
  CHECK_THROWS_AS(check_flow(broken), DataError);
  auto lost = small;
  lost.nodes.at(3).terminating -= 1;
  CHECK_THROWS_AS(check_flow(lost), DataError);

  auto dotp = tmp_path("pathways.dot");
  auto jsonp = tmp_path("pathways.json");
  save_pathways_dot(tree, dotp);
  save_pathways_json(tree, jsonp);
  std::ifstream fd(dotp);
  std::string dot((std::istreambuf_iterator<char>(fd)), std::istreambuf_iterator<char>());
  CHECK(dot.find("digraph pathways") != std::string::npos);
  CHECK(dot.find("AP2") != std::string::npos);
  std::ifstream fj(jsonp);
  auto parsed = nlohmann::json::parse(fj);
  CHECK(parsed["n_studies"] == 80);
  CHECK(parsed["nodes"].size() == tree.nodes.size());
  CHECK(parsed["edges"].size() == tree.edges.size());
}

TEST_CASE("lambda sweep emits rl rows plus the full-study reference") {
  auto cfg = synth::GeneratorConfig::defaults(120, 61);
  auto data = synth::generate_dataset(cfg);
  auto split = synth::split_dataset(data.studies, 61);
  auto grid = prob::CategoryGrid::defaults(3);

  FakePredictor pred;
  pred.fn = [](const synth::StudyRecord& s, const std::vector<std::uint8_t>& m) {
    return mask_count(m) >= 1 ? tight_at(s.y_as_value, s.y_ef) : tight_at(0.5, 0.45);
  };

  rl::PPOConfig base;
  base.train_epochs = 8;
  base.hidden = 16;
  base.lr = 1e-3;
  auto sweep = sweep_lambda(data, split, pred, {0.01, 1.5}, {1, 2}, base, grid);

  REQUIRE(sweep.rows.size() == 3);
  CHECK(sweep.rows[0].with_rl);
  CHECK(sweep.rows[1].with_rl);
  CHECK_FALSE(sweep.rows[2].with_rl);
  CHECK(sweep.rows[2].mean.ratio == 100.0);
  CHECK(sweep.rows[2].mean.mean_count == 5.0);
  CHECK(sweep.rows[2].mean_reward == doctest::Approx(2.0).epsilon(1e-9));
  for (const auto& row : sweep.rows) {
    CHECK(std::isfinite(row.mean_reward));
    CHECK(row.mean.n_studies == static_cast<long>(split.test.size()));
  }

  CHECK_THROWS_AS(sweep_lambda(data, split, pred, {0.5, 0.1}, {1}, base, grid), ConfigError);
  CHECK_THROWS_AS(sweep_lambda(data, split, pred, {}, {1}, base, grid), ConfigError);

  auto table = render_sweep(sweep);
  CHECK(table.find("w/o RL") != std::string::npos);
  auto lines = sweep_lines(sweep);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 3);
  auto first = nlohmann::json::parse(lines.substr(0, lines.find('\n')));
  CHECK(first["with_rl"] == true);
  CHECK(first["lambda"] == 0.01);
}

TEST_CASE("fnv1a64 and report serialization are stable") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("pacq") != fnv1a64("pacr"));

  MetricsReport r;
  r.bacc_as = 61.25;
  r.bacc_ef = 58.5;
  r.mean_bacc = 59.875;
  r.n_studies = 42;
  r.config_hash = "deadbeef";
  auto line = report_line("random-k2", r);
  auto j = nlohmann::json::parse(line);
  CHECK(j["label"] == "random-k2");
  CHECK(j["bacc_as"] == 61.25);
  CHECK(j["config_hash"] == "deadbeef");
  CHECK(line.find('\n') == std::string::npos);

  auto table = render_table({{"full", r}});
  CHECK(table.find("full") != std::string::npos);
  CHECK(table.find("61.25") != std::string::npos);
}
