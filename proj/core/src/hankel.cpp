#include "spoofsim/hankel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spoofsim/errors.hpp"

namespace spoofsim::hankel {
namespace {

void check_shape(std::size_t tau, std::size_t kappa) {
  if (kappa < 2 || kappa + 1 > tau) {
    throw InvalidArgument("hankel: need 2 <= kappa <= tau - 1 (kappa=" + std::to_string(kappa) +
                          ", tau=" + std::to_string(tau) + ")");
  }
}

bool all_zero(std::span<const double> s) {
  return std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; });
}

void check_finite(std::span<const double> s) {
  for (double v : s) {
    if (!std::isfinite(v)) throw InvalidArgument("hankel: window contains a non-finite sample");
  }
}

// Core of predict_next once the rank is known.
double predict_with_u(const Eigen::MatrixXd& u_r, std::span<const double> samples,
                      std::size_t kappa) {
  const auto rows = static_cast<Eigen::Index>(kappa);
  const Eigen::MatrixXd up = u_r.topRows(rows - 1);
  const Eigen::RowVectorXd last = u_r.row(rows - 1);

  Eigen::VectorXd tail(rows - 1);
  const std::size_t start = samples.size() - (kappa - 1);
  for (Eigen::Index k = 0; k < rows - 1; ++k) tail(k) = samples[start + static_cast<std::size_t>(k)];

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(up, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() < up.cols() || s(s.size() - 1) <= 1e-10 * std::max(1.0, s(0))) {
    throw SingularSystem("hankel: projection onto the leading subspace is rank deficient");
  }
  const Eigen::VectorXd d = svd.solve(tail);
  return last.dot(d);
}

Eigen::BDCSVD<Eigen::MatrixXd> decompose(const Eigen::MatrixXd& h, unsigned options) {
  return Eigen::BDCSVD<Eigen::MatrixXd>(h, options);
}

double tail_fraction(const Eigen::VectorXd& sigma, int r) {
  double total = 0.0;
  double tail = 0.0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    const double e = sigma(k) * sigma(k);
    total += e;
    if (k >= r) tail += e;
  }
  if (total == 0.0) return 0.0;
  return std::sqrt(std::max(0.0, tail) / total);
}

}  // namespace

HankelWindow HankelWindow::with_default_rows(std::vector<double> samples) {
  HankelWindow w;
  w.kappa = samples.size() / 2;
  w.samples = std::move(samples);
  return w;
}

Eigen::MatrixXd build_hankel(std::span<const double> samples, std::size_t kappa) {
  check_shape(samples.size(), kappa);
  const std::size_t cols = samples.size() - kappa + 1;
  Eigen::MatrixXd h(static_cast<Eigen::Index>(kappa), static_cast<Eigen::Index>(cols));
  for (std::size_t p = 0; p < kappa; ++p) {
    for (std::size_t q = 0; q < cols; ++q) {
      h(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = samples[p + q];
    }
  }
  return h;
}

Eigen::MatrixXd build_hankel(const HankelWindow& window) {
  return build_hankel(window.samples, window.kappa);
}

int select_rank(const Eigen::VectorXd& sigma, const RankRule& rule, int max_rank) {
  if (max_rank < 1) throw InvalidArgument("select_rank: max_rank must be >= 1");
  if (rule.fixed > 0) {
    if (rule.fixed > max_rank) {
      throw InvalidArgument("select_rank: fixed rank " + std::to_string(rule.fixed) +
                            " exceeds the admissible maximum " + std::to_string(max_rank));
    }
    return rule.fixed;
  }
  if (!(rule.energy > 0.0 && rule.energy <= 1.0)) {
    throw InvalidArgument("select_rank: energy fraction must lie in (0, 1]");
  }
  const double total = sigma.squaredNorm();
  if (total == 0.0) return 1;
  double acc = 0.0;
  int r = 0;
  while (r < sigma.size()) {
    acc += sigma(r) * sigma(r);
    ++r;
    if (acc >= rule.energy * total) break;
  }
  return std::clamp(r, 1, max_rank);
}

SvdTruncation low_rank_approx(const Eigen::MatrixXd& h, int r) {
  const auto max_r = static_cast<int>(std::min(h.rows(), h.cols()));
  if (r < 1 || r > max_r) {
    throw InvalidArgument("low_rank_approx: rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(max_r) + "]");
  }
  SvdTruncation out;
  out.rank = r;
  const double norm = h.norm();
  if (norm == 0.0) {
    out.degenerate = true;
    out.u = Eigen::MatrixXd::Zero(h.rows(), r);
    out.v = Eigen::MatrixXd::Zero(h.cols(), r);
    out.sigma = Eigen::VectorXd::Zero(max_r);
    out.approx = Eigen::MatrixXd::Zero(h.rows(), h.cols());
    return out;
  }
  const auto svd = decompose(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.sigma = svd.singularValues();
  out.u = svd.matrixU().leftCols(r);
  out.v = svd.matrixV().leftCols(r);
  out.approx = out.u * out.sigma.head(r).asDiagonal() * out.v.transpose();
  out.rel_error = (out.approx - h).norm() / norm;
  return out;
}

double low_rank_error(const Eigen::MatrixXd& h, int r) {
  const auto max_r = static_cast<int>(std::min(h.rows(), h.cols()));
  if (r < 1 || r > max_r) {
    throw InvalidArgument("low_rank_error: rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(max_r) + "]");
  }
  if (h.norm() == 0.0) return 0.0;
  const auto svd = decompose(h, 0);
  return tail_fraction(svd.singularValues(), r);
}

double predict_next(const HankelWindow& window, const RankRule& rule) {
  check_shape(window.tau(), window.kappa);
  check_finite(window.samples);
  if (all_zero(window.samples)) return 0.0;
  const Eigen::MatrixXd h = build_hankel(window);
  const auto svd = decompose(h, Eigen::ComputeThinU);
  // Only r <= kappa - 1 leaves the fit determined.
  const int max_r = static_cast<int>(std::min<Eigen::Index>(h.rows() - 1, h.cols()));
  const int r = select_rank(svd.singularValues(), rule, max_r);
  return predict_with_u(svd.matrixU().leftCols(r), window.samples, window.kappa);
}

double predict_next(const HankelWindow& window, int r) {
  return predict_next(window, RankRule::fixed_rank(r));
}

ForecastResult predict_horizon(const HankelWindow& window, std::size_t steps,
                               const RankRule& rule) {
  check_shape(window.tau(), window.kappa);
  check_finite(window.samples);
  ForecastResult out;
  out.predicted.reserve(steps);
  out.rel_error.reserve(steps);
  out.rank.reserve(steps);

  std::vector<double> buf = window.samples;
  const std::size_t tau = window.tau();
  const auto rows = static_cast<Eigen::Index>(window.kappa);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::span<const double> cur(buf.data() + k, tau);
    double next = 0.0;
    int r = 0;
    double err = 0.0;
    if (all_zero(cur)) {
      r = rule.fixed > 0 ? rule.fixed : 1;
    } else {
      const Eigen::MatrixXd h = build_hankel(cur, window.kappa);
      const auto svd = decompose(h, Eigen::ComputeThinU);
      const int max_r = static_cast<int>(std::min<Eigen::Index>(rows - 1, h.cols()));
      r = select_rank(svd.singularValues(), rule, max_r);
      err = tail_fraction(svd.singularValues(), r);
      next = predict_with_u(svd.matrixU().leftCols(r), cur, window.kappa);
    }
    out.predicted.push_back(next);
    out.rel_error.push_back(err);
    out.rank.push_back(r);
    buf.push_back(next);
  }
  return out;
}

ForecastResult predict_horizon(const HankelWindow& window, std::size_t steps, int r) {
  return predict_horizon(window, steps, RankRule::fixed_rank(r));
}

double estimation_threshold(std::span<const double> trusted_window, double t_i, double t_d,
                            std::size_t trusted_count) {
  if (trusted_count < 2) throw InvalidArgument("estimation_threshold: need L >= 2");
  if (trusted_window.size() < trusted_count) {
    throw InvalidArgument("estimation_threshold: window shorter than L");
  }
  double acc = 0.0;
  for (std::size_t k = 1; k < trusted_count; ++k) {
    acc += std::abs(trusted_window[k] - trusted_window[k - 1]);
  }
  const double mean = acc / static_cast<double>(trusted_count - 1);
  const double factor = std::max(2.0, 30.0 * std::exp(-3.0 * (t_i - t_d)));
  return factor * mean;
}

double wrap_angle(double a) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return a + two_pi * std::floor((std::numbers::pi - a) / two_pi);
}

std::vector<double> unwrap_phase(std::span<const double> series) {
  std::vector<double> out;
  out.reserve(series.size());
  if (series.empty()) return out;
  out.push_back(series[0]);
  for (std::size_t k = 1; k < series.size(); ++k) {
    out.push_back(out.back() + wrap_angle(series[k] - series[k - 1]));
  }
  return out;
}

}  // namespace spoofsim::hankel
