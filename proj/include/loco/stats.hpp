#pragma once

// Training-curve analytics: trailing-window coefficient of variation and the
// learning-efficiency summary statistics. All pure functions of a series.

#include <vector>

namespace loco {

struct CovResult {
    bool defined = false;  // false when the window mean is ~0
    double cov = 0;        // population std / mean over the trailing window
};

CovResult stability_cov(const std::vector<double>& series, int window = 200);

struct EfficiencyStats {
    double final_reward = 0;        // mean of the last `early_window` entries
    double early_slope = 0;         // least-squares slope over the first `early_window`
    double learning_efficiency = 0; // (last - first) / (epochs - 1)
    double auc_per_epoch = 0;       // mean of the whole series
};

EfficiencyStats efficiency_stats(const std::vector<double>& series, int early_window = 120);

// Least-squares slope of y against x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace loco
