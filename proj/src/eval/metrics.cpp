#include "pacq/eval/metrics.hpp"

#include <cmath>
#include <map>

#include "pacq/common/errors.hpp"

namespace pacq::eval {

namespace {

void check_pair(std::size_t np, std::size_t nl, int n_classes) {
  if (np == 0 || nl == 0) throw ShapeError("metrics: empty input");
  if (np != nl) throw ShapeError("metrics: prediction/label length mismatch");
  if (n_classes < 1) throw ShapeError("metrics: n_classes must be positive");
}

}  // namespace

double balanced_accuracy(const std::vector<int>& preds, const std::vector<int>& labels,
                         int n_classes) {
  check_pair(preds.size(), labels.size(), n_classes);
  std::vector<long> total(n_classes, 0), correct(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i], p = preds[i];
    if (y < 0 || y >= n_classes || p < 0 || p >= n_classes)
      throw ShapeError("metrics: class index out of range");
    ++total[y];
    if (p == y) ++correct[y];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    ++present;
  }
  return present == 0 ? 0.0 : sum / present;
}

double weighted_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                   int n_classes) {
  check_pair(preds.size(), labels.size(), n_classes);
  std::vector<long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i], p = preds[i];
    if (y < 0 || y >= n_classes || p < 0 || p >= n_classes)
      throw ShapeError("metrics: class index out of range");
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double out = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    long support = tp[c] + fn[c];
    if (support == 0) continue;
    double prec = tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    double rec = static_cast<double>(tp[c]) / support;
    double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    out += f1 * static_cast<double>(support) / static_cast<double>(labels.size());
  }
  return out;
}

double bmae(const std::vector<double>& pred_ef, const std::vector<double>& true_ef,
            const std::vector<int>& categories) {
  if (pred_ef.empty()) throw ShapeError("metrics: empty input");
  if (pred_ef.size() != true_ef.size() || pred_ef.size() != categories.size())
    throw ShapeError("metrics: prediction/label length mismatch");
  std::map<int, std::pair<double, long>> groups;
  for (std::size_t i = 0; i < pred_ef.size(); ++i) {
    auto& g = groups[categories[i]];
    g.first += std::abs(pred_ef[i] - true_ef[i]) * 100.0;
    ++g.second;
  }
  double sum = 0.0;
  for (const auto& [cat, g] : groups) sum += g.first / static_cast<double>(g.second);
  return sum / static_cast<double>(groups.size());
}

}  // namespace pacq::eval
