// Small statistics toolkit: compensated sums, OLS, one-sample KS.

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace htexit {

class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Sample mean and standard error of the mean (n - 1 denominator).
MeanStderr mean_stderr(const std::vector<double>& xs);

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
};

/// y = intercept + slope * x. Needs at least two distinct x values; the
/// standard errors need at least three points and are 0 otherwise.
OlsFit ols(const std::vector<double>& x, const std::vector<double>& y);

/// sup_x |F_n(x) - F(x)| for the empirical CDF of `samples`.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// KS distance against the unit exponential.
double ks_exponential_statistic(const std::vector<double>& samples);

/// Asymptotic KS critical value c(level) / sqrt(n); level in {0.10, 0.05, 0.01}.
double ks_critical_value(std::size_t n, double level);

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace htexit
