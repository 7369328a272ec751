#pragma once

// Hankel-structured low-rank models of a single PMU channel: construction,
// truncated SVD, subspace one-step prediction and its recursive extension.
// The attacker uses these to look ahead; the defender uses the
// approximation error as an anomaly signal.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace spoofsim::hankel {

// A length-tau slice of one channel, arranged with `kappa` rows.
struct HankelWindow {
  std::vector<double> samples;
  std::size_t kappa = 0;

  [[nodiscard]] std::size_t tau() const noexcept { return samples.size(); }
  [[nodiscard]] std::size_t columns() const noexcept { return samples.size() - kappa + 1; }

  // kappa = floor(tau / 2).
  [[nodiscard]] static HankelWindow with_default_rows(std::vector<double> samples);
};

// How many singular triplets to keep. fixed > 0 pins the rank; otherwise the
// smallest r whose leading singular values carry `energy` of sum(sigma^2).
struct RankRule {
  int fixed = 0;
  double energy = 0.99;

  [[nodiscard]] static RankRule fixed_rank(int r) { return RankRule{r, 0.99}; }
  [[nodiscard]] static RankRule energy_fraction(double e) { return RankRule{0, e}; }
};

struct SvdTruncation {
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;  // non-increasing
  Eigen::MatrixXd v;
  int rank = 0;
  Eigen::MatrixXd approx;
  double rel_error = 0.0;   // ||approx - H||_F / ||H||_F
  bool degenerate = false;  // H == 0; rel_error reported as 0
};

struct ForecastResult {
  std::vector<double> predicted;  // one per step
  std::vector<double> rel_error;  // low-rank error of the window behind each step
  std::vector<int> rank;
  [[nodiscard]] std::size_t horizon() const noexcept { return predicted.size(); }
};

// kappa x (tau - kappa + 1) matrix with H(p, q) = samples[p + q].
// Throws InvalidArgument unless 2 <= kappa <= tau - 1.
[[nodiscard]] Eigen::MatrixXd build_hankel(std::span<const double> samples, std::size_t kappa);
[[nodiscard]] Eigen::MatrixXd build_hankel(const HankelWindow& window);

// Rank picked by a rule for a set of singular values, clamped to
// [1, max_rank].
[[nodiscard]] int select_rank(const Eigen::VectorXd& sigma, const RankRule& rule, int max_rank);

// Best rank-r approximation. Requires 1 <= r <= min(rows, cols).
[[nodiscard]] SvdTruncation low_rank_approx(const Eigen::MatrixXd& h, int r);

// Same error as low_rank_approx(h, r).rel_error from singular values alone.
[[nodiscard]] double low_rank_error(const Eigen::MatrixXd& h, int r);

// Predicts sample tau + 1. With U_r the leading left singular vectors, the
// first kappa - 1 rows of U_r are fitted to the trailing kappa - 1 samples
// in least squares and the last row extends the fit by one step.
// Throws SingularSystem when that fit is rank deficient. An all-zero window
// predicts 0.
[[nodiscard]] double predict_next(const HankelWindow& window, const RankRule& rule);
[[nodiscard]] double predict_next(const HankelWindow& window, int r);

// Applies predict_next `steps` times, sliding the window forward over each
// previous prediction as if it had been measured.
[[nodiscard]] ForecastResult predict_horizon(const HankelWindow& window, std::size_t steps,
                                             const RankRule& rule);
[[nodiscard]] ForecastResult predict_horizon(const HankelWindow& window, std::size_t steps, int r);

// Adaptive estimation threshold for phase angles:
//   max(2, 30 exp(-3 (t_i - t_d))) * mean |theta(k) - theta(k-1)|
// over the first L samples of the trusted window. Pass t_d = -infinity when
// no bad data has been seen. Throws InvalidArgument for L < 2 or a window
// shorter than L.
[[nodiscard]] double estimation_threshold(std::span<const double> trusted_window, double t_i,
                                          double t_d, std::size_t trusted_count);

// Removes 2*pi jumps: output[0] = input[0] and every successive difference
// lies in (-pi, pi].
[[nodiscard]] std::vector<double> unwrap_phase(std::span<const double> series);

// Wraps an angle into (-pi, pi].
[[nodiscard]] double wrap_angle(double a) noexcept;

}  // namespace spoofsim::hankel
