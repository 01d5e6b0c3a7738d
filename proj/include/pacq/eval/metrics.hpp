#pragma once

#include <vector>

namespace pacq::eval {

// Unweighted mean of per-class recall; classes absent from labels are
// excluded from the mean.
double balanced_accuracy(const std::vector<int>& preds, const std::vector<int>& labels,
                         int n_classes);

// Support-weighted mean of per-class F1; zero-division resolves to 0.
double weighted_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                   int n_classes);

// Groups by true EF category, MAE per non-empty group in EF percentage
// points, unweighted mean over groups.
double bmae(const std::vector<double>& pred_ef, const std::vector<double>& true_ef,
            const std::vector<int>& categories);

}  // namespace pacq::eval
