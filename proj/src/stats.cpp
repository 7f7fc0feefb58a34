#include "loco/stats.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace loco {

CovResult stability_cov(const std::vector<double>& series, int window) {
    if (window <= 0) throw std::invalid_argument("stability_cov: window must be positive");
    if (static_cast<int>(series.size()) < window)
        throw std::invalid_argument("stability_cov: series shorter than window");
    const auto begin = series.end() - window;
    const double mean = std::accumulate(begin, series.end(), 0.0) / window;
    double var = 0;
    for (auto it = begin; it != series.end(); ++it) var += (*it - mean) * (*it - mean);
    const double sd = std::sqrt(var / window);  // population std
    CovResult r;
    if (std::abs(mean) < 1e-12) return r;  // CoV undefined at ~zero mean
    r.defined = true;
    r.cov = sd / mean;
    return r;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("ls_slope: need two matched points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double num = 0, den = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    if (den == 0) throw std::invalid_argument("ls_slope: degenerate x");
    return num / den;
}

EfficiencyStats efficiency_stats(const std::vector<double>& series, int early_window) {
    const int n = static_cast<int>(series.size());
    if (early_window < 2) throw std::invalid_argument("efficiency_stats: window too small");
    if (n <= early_window) throw std::invalid_argument("efficiency_stats: series too short");
    EfficiencyStats s;
    s.final_reward =
        std::accumulate(series.end() - early_window, series.end(), 0.0) / early_window;
    std::vector<double> xs(static_cast<size_t>(early_window)),
        ys(series.begin(), series.begin() + early_window);
    for (int i = 0; i < early_window; ++i) xs[static_cast<size_t>(i)] = i;
    s.early_slope = ls_slope(xs, ys);
    s.learning_efficiency = (series.back() - series.front()) / double(n - 1);
    s.auc_per_epoch = std::accumulate(series.begin(), series.end(), 0.0) / n;
    return s;
}

}  // namespace loco
