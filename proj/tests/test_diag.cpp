#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "pacq/diag/model.hpp"
#include "pacq/diag/train.hpp"
#include "pacq/numerics/gaussian.hpp"
#include "pacq/prob/pmf.hpp"
#include "pacq/synth/generator.hpp"

using namespace pacq;
using namespace pacq::diag;

namespace {

std::string tmp_path(const std::string& name) { return "/tmp/pacq_test_" + name; }

synth::Dataset make_dataset(std::int64_t n, double noise, double spread,
                            std::uint64_t seed) {
  auto cfg = synth::GeneratorConfig::defaults(n, seed);
  cfg.noise_std = noise;
  cfg.quality_spread = spread;
  return synth::generate_dataset(cfg);
}

bool same_joint(const prob::GaussianJoint& a, const prob::GaussianJoint& b) {
  return a.mu.x == b.mu.x && a.mu.y == b.mu.y && a.sigma.a11 == b.sigma.a11 &&
         a.sigma.a12 == b.sigma.a12 && a.sigma.a21 == b.sigma.a21 &&
         a.sigma.a22 == b.sigma.a22;
}

}  // namespace

TEST_CASE("masked slot contents never influence predictions") {
  auto data = make_dataset(6, 0.55, 0.35, 11);
  auto model = init_model(EncoderConfig{}, 21);
  Rng rng(77, "mask-test");
  for (int trial = 0; trial < 20; ++trial) {
    const auto& study = data.studies[trial % data.studies.size()];
    std::vector<std::uint8_t> mask(5);
    bool any_masked = false;
    for (auto& m : mask) {
      m = rng.uniform() < 0.5 ? 1 : 0;
      any_masked |= (m == 0);
    }
    if (!any_masked) mask[trial % 5] = 0;
    auto base = predict_joint(model, study, mask);

    synth::StudyRecord garbage = study;
    for (int v = 0; v < 5; ++v) {
      if (mask[v]) continue;
      for (int d = 0; d < 32; ++d)
        garbage.embeddings[static_cast<std::size_t>(v) * 32 + d] =
            trial % 2 == 0 ? 1e9 : std::numeric_limits<double>::quiet_NaN();
    }
    auto perturbed = predict_joint(model, garbage, mask);
    CHECK(same_joint(base, perturbed));
  }
}

TEST_CASE("zero-view prediction is constant across studies") {
  auto data = make_dataset(4, 0.55, 0.35, 13);
  auto model = init_model(EncoderConfig{}, 5);
  std::vector<std::uint8_t> none(5, 0);
  auto a = predict_joint(model, data.studies[0], none);
  for (std::size_t i = 1; i < data.studies.size(); ++i)
    CHECK(same_joint(a, predict_joint(model, data.studies[i], none)));
}

TEST_CASE("covariance is symmetric positive definite with bounded stds") {
  auto data = make_dataset(30, 0.55, 0.35, 17);
  auto model = init_model(EncoderConfig{}, 9);
  Rng rng(3, "psd-test");
  for (const auto& study : data.studies) {
    std::vector<std::uint8_t> mask(5);
    for (auto& m : mask) m = rng.uniform() < 0.6 ? 1 : 0;
    auto j = predict_joint(model, study, mask);
    CHECK(j.sigma.a12 == j.sigma.a21);
    CHECK(j.sigma.a11 > 0.0);
    double det = j.sigma.a11 * j.sigma.a22 - j.sigma.a12 * j.sigma.a21;
    CHECK(det > 0.0);
    double s1 = std::sqrt(j.sigma.a11), s2 = std::sqrt(j.sigma.a22);
    CHECK(s1 > kSigmaMin);
    CHECK(s1 < 1.0);
    CHECK(s2 > kSigmaMin);
    CHECK(s2 < 1.0);
    CHECK(std::fabs(j.sigma.a12 / (s1 * s2)) <= kRhoMax);
    CHECK(j.mu.x > 0.0);
    CHECK(j.mu.x < 1.0);
    CHECK(j.mu.y > 0.0);
    CHECK(j.mu.y < 1.0);
  }
}

TEST_CASE("scalar loss reference values") {
  auto grid = prob::CategoryGrid::defaults(3);
  prob::GaussianJoint j;

  // sigma chosen so each of the three AS bins holds exactly 1/3 mass
  double sigma_third = (1.0 / 6.0) / 0.4307272992954576;
  j.mu = {0.5, 0.5};
  j.sigma = {sigma_third * sigma_third, 0.0, 0.0, 0.04};
  for (int c = 0; c < 3; ++c)
    CHECK(loss_as(j, c, grid) == doctest::Approx(std::log(3.0)).epsilon(1e-6));

  j.sigma = {0.01, 0.0, 0.0, 0.04};  // mu_AS 0.5, sigma_AS 0.1
  CHECK(loss_as(j, 1, grid) == doctest::Approx(0.100470).epsilon(1e-3));

  // AS mass concentrated inside the true bin drives the loss to ~0
  j.mu = {0.5, 0.5};
  j.sigma = {1e-8, 0.0, 0.0, 0.04};
  CHECK(loss_as(j, 1, grid) < 1e-9);

  CHECK_THROWS_AS(loss_as(j, -1, grid), LabelError);
  CHECK_THROWS_AS(loss_as(j, 3, grid), LabelError);

  j.sigma = {0.04, 0.0, 0.0, 1.0};
  CHECK(loss_ef(j, 0.5) == doctest::Approx(0.5 * std::log(2.0 * 3.141592653589793))
                               .epsilon(1e-9));
  j.sigma = {0.04, 0.0, 0.0, 0.25};  // sigma_EF = 0.5
  CHECK(loss_ef(j, 1.0) ==
        doctest::Approx(0.5 * std::log(2.0 * 3.141592653589793 * 0.25) + 0.5)
            .epsilon(1e-9));
  j.sigma = {0.04, 0.0, 0.0, 0.01};
  CHECK(loss_ef(j, 0.6) == doctest::Approx(-0.8836).epsilon(1e-3));

  double las = loss_as(j, 1, grid), lef = loss_ef(j, 0.6);
  CHECK(loss_total(j, 1, 0.6, 1.0, 0.0, grid) == doctest::Approx(las).epsilon(1e-12));
  CHECK(loss_total(j, 1, 0.6, 0.0, 1.0, grid) == doctest::Approx(lef).epsilon(1e-12));
  CHECK(loss_total(j, 1, 0.6, 1.0, 1.0, grid) ==
        doctest::Approx(las + lef).epsilon(1e-12));
  CHECK_THROWS_AS(loss_total(j, 1, 0.6, -1.0, 1.0, grid), ConfigError);
}

TEST_CASE("AS bin masses integrate to one") {
  auto grid = prob::CategoryGrid::defaults(3);
  Rng rng(41, "mass-test");
  for (int t = 0; t < 200; ++t) {
    prob::GaussianJoint j;
    j.mu = {rng.uniform(), rng.uniform()};
    double s = rng.uniform(0.05, 0.9);
    j.sigma = {s * s, 0.0, 0.0, 0.04};
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += std::exp(-loss_as(j, c, grid));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("batched losses agree with scalar references") {
  EncoderConfig cfg;
  auto model = init_model(cfg, 33);
  auto data = make_dataset(16, 0.55, 0.35, 19);
  auto grid = prob::CategoryGrid::defaults(3);
  Rng rng(55, "batch-test");

  std::vector<const synth::StudyRecord*> studies;
  std::vector<std::uint8_t> masks;
  std::vector<int> y_as;
  std::vector<double> y_ef;
  for (const auto& s : data.studies) {
    studies.push_back(&s);
    for (int v = 0; v < 5; ++v) masks.push_back(rng.uniform() < 0.7 ? 1 : 0);
    y_as.push_back(s.y_as_class);
    y_ef.push_back(s.y_ef);
  }
  auto joints = predict_batch(model, studies, masks);

  int n = cfg.n_views, d = cfg.input_dim;
  std::vector<double> flat(studies.size() * n * d, 0.0);
  for (std::size_t i = 0; i < studies.size(); ++i)
    for (int v = 0; v < n; ++v)
      if (masks[i * n + v])
        for (int k = 0; k < d; ++k)
          flat[(i * n + v) * d + k] = studies[i]->embeddings[v * d + k];
  auto enc = encode_tokens(model, num::Tensor::from(flat, static_cast<int>(studies.size()) * n, d),
                           masks, static_cast<int>(studies.size()));
  auto h = head_forward(model, enc);

  double mean_as = 0.0, mean_ef = 0.0;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    mean_as += loss_as(joints[i], y_as[i], grid);
    mean_ef += loss_ef(joints[i], y_ef[i]);
  }
  mean_as /= static_cast<double>(studies.size());
  mean_ef /= static_cast<double>(studies.size());

  CHECK(loss_as_batch(h, y_as, grid).item() == doctest::Approx(mean_as).epsilon(1e-10));
  CHECK(loss_ef_batch(h, y_ef).item() == doctest::Approx(mean_ef).epsilon(1e-10));
}

TEST_CASE("loss gradients match finite differences on a small config") {
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.token_dim = 8;
  cfg.ff_dim = 12;
  cfg.input_dim = 6;
  cfg.n_views = 3;
  cfg.head_hidden = 6;
  auto model = init_model(cfg, 71);
  auto grid = prob::CategoryGrid::defaults(3);

  Rng rng(9, "fd-test");
  int batch = 3, n = cfg.n_views, d = cfg.input_dim;
  std::vector<double> flat(static_cast<std::size_t>(batch) * n * d);
  for (auto& x : flat) x = rng.normal(0.0, 0.8);
  std::vector<std::uint8_t> masks = {1, 1, 1, 1, 0, 1, 0, 0, 0};
  for (int b = 0; b < batch; ++b)
    for (int v = 0; v < n; ++v)
      if (!masks[b * n + v])
        for (int k = 0; k < d; ++k) flat[(b * n + v) * d + k] = 0.0;
  std::vector<int> y_as = {0, 1, 2};
  std::vector<double> y_ef = {0.35, 0.52, 0.61};

  auto loss_value = [&]() {
    auto views = num::Tensor::from(flat, batch * n, d);
    auto h = head_forward(model, encode_tokens(model, views, masks, batch));
    return num::add(loss_as_batch(h, y_as, grid), loss_ef_batch(h, y_ef)).item();
  };

  auto params = model.parameters();
  for (auto& p : params) p.zero_grad();
  {
    num::Tape tape;
    num::TapeScope scope(tape);
    auto views = num::Tensor::from(flat, batch * n, d);
    auto h = head_forward(model, encode_tokens(model, views, masks, batch));
    auto loss = num::add(loss_as_batch(h, y_as, grid), loss_ef_batch(h, y_ef));
    num::backward(loss);
  }

  const double eps = 1e-6;
  int checked = 0;
  for (auto& p : params) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j) {
        double orig = p.at(i, j);
        p.at(i, j) = orig + eps;
        double up = loss_value();
        p.at(i, j) = orig - eps;
        double dn = loss_value();
        p.at(i, j) = orig;
        double fd = (up - dn) / (2.0 * eps);
        double ad = p.grad_at(i, j);
        double rel = std::fabs(fd - ad) / std::max({1.0, std::fabs(fd), std::fabs(ad)});
        CHECK(rel < 1e-4);
        ++checked;
      }
  }
  CHECK(checked > 500);
}

TEST_CASE("dimension mismatch between study and model raises config error") {
  auto model = init_model(EncoderConfig{}, 2);
  synth::StudyRecord bad;
  bad.embeddings.assign(5 * 16, 0.1);  // wrong embed_dim
  bad.qualities.assign(5, 1.0);
  std::vector<std::uint8_t> mask(5, 1);
  CHECK_THROWS_AS(predict_joint(model, bad, mask), ConfigError);
}

TEST_CASE("training reaches high validation accuracy on near-noiseless data") {
  auto data = make_dataset(600, 0.01, 0.0, 101);
  auto split = synth::split_dataset(data.studies, 101);

  TrainConfig tcfg;
  tcfg.epochs = 30;
  tcfg.batch_size = 32;
  tcfg.lr = 2e-3;
  tcfg.seed = 7;
  auto res = train_diagnostic(data, split, EncoderConfig{}, tcfg);

  CHECK(res.model.frozen);
  CHECK(res.train_loss.size() == 30);
  CHECK(res.train_loss.back() < res.train_loss.front());
  CHECK(res.best_val_bacc >= 0.95);
  CHECK(res.best_val_bacc >= res.val_bacc.back());

  // restored checkpoint reproduces its recorded validation score
  CHECK(validation_bacc(res.model, data, split.val) ==
        doctest::Approx(res.best_val_bacc).epsilon(1e-12));

  // empty-prior calibration: zero-view mu_EF near the train-label mean
  double mean_ef = 0.0;
  for (auto i : split.train) mean_ef += data.studies[i].y_ef;
  mean_ef /= static_cast<double>(split.train.size());
  std::vector<std::uint8_t> none(5, 0);
  auto empty_joint = predict_joint(res.model, data.studies[split.val[0]], none);
  CHECK(std::fabs(empty_joint.mu.y - mean_ef) <= 0.05);

  // unmasking one view moves the prediction for nearly all studies
  int moved = 0, tried = 0;
  for (std::size_t i = 0; i < split.val.size() && tried < 50; ++i, ++tried) {
    const auto& s = data.studies[split.val[i]];
    std::vector<std::uint8_t> one(5, 0);
    one[3] = 1;
    if (!same_joint(predict_joint(res.model, s, none), predict_joint(res.model, s, one)))
      ++moved;
  }
  CHECK(moved >= tried - 1);

  // masked-content invariance still exact after training
  const auto& probe = data.studies[split.val[1]];
  std::vector<std::uint8_t> pmask = {1, 0, 1, 0, 1};
  auto before = predict_joint(res.model, probe, pmask);
  synth::StudyRecord tampered = probe;
  for (int v : {1, 3})
    for (int k = 0; k < 32; ++k)
      tampered.embeddings[static_cast<std::size_t>(v) * 32 + k] = -4e7;
  CHECK(same_joint(before, predict_joint(res.model, tampered, pmask)));

  // persistence: identical predictions after save/load round-trip
  auto path = tmp_path("diag_model.pdxm");
  save_model(res.model, path);
  auto loaded = load_model(path);
  CHECK(loaded.frozen);
  for (int i = 0; i < 10; ++i) {
    const auto& s = data.studies[split.test[i]];
    std::vector<std::uint8_t> m = {1, 1, 0, 1, 0};
    CHECK(same_joint(predict_joint(res.model, s, m), predict_joint(loaded, s, m)));
  }
}

TEST_CASE("checkpoint corruption detection") {
  auto model = init_model(EncoderConfig{}, 13);
  auto path = tmp_path("diag_corrupt.pdxm");
  save_model(model, path);
  std::ifstream f(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  f.close();

  auto write_variant = [&](const std::string& name, std::string content) {
    auto p = tmp_path(name);
    std::ofstream out(p, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    return p;
  };

  std::string bad = bytes;
  bad[0] = 'Q';
  try {
    load_model(write_variant("diag_badmagic.pdxm", bad));
    FAIL("expected magic error");
  } catch (const DataError& e) {
    CHECK(e.kind() == DataError::Kind::Magic);
  }

  bad = bytes;
  bad[4] = 9;
  try {
    load_model(write_variant("diag_badver.pdxm", bad));
    FAIL("expected version error");
  } catch (const DataError& e) {
    CHECK(e.kind() == DataError::Kind::Version);
  }

  bad = bytes;
  bad[bytes.size() / 2] ^= 0x40;
  try {
    load_model(write_variant("diag_badbody.pdxm", bad));
    FAIL("expected checksum error");
  } catch (const DataError& e) {
    CHECK(e.kind() == DataError::Kind::Checksum);
  }

  try {
    load_model(write_variant("diag_trunc.pdxm", bytes.substr(0, bytes.size() - 33)));
    FAIL("expected truncation error");
  } catch (const DataError& e) {
    CHECK(e.kind() == DataError::Kind::Truncated);
  }
}
