#pragma once

// Defender side: weighted least squares with the largest-normalized-residual
// test, a Kalman filter with deviation-based measurement weighting, the
// Hankel low-rank error monitor and the cross-node gradient-sign detector.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spoofsim/grid.hpp"
#include "spoofsim/stream.hpp"

namespace spoofsim::detect {

// What the control center assumes about its measurements: the reduced
// Jacobian (slack column removed) and a diagonal error covariance.
struct MeasurementModel {
  Eigen::MatrixXd h;        // m x (n - 1)
  Eigen::MatrixXd h_full;   // m x n, for mapping bus-angle vectors to flows
  Eigen::VectorXd r;        // diagonal of R, p.u.^2

  // Flows are derived from PMU angles, so a flow inherits the variance of
  // (theta_i - theta_j) / x plus any direct flow-meter variance:
  //   R_kk = sigma_theta^2 * sum_j H_kj^2 + sigma_flow^2.
  [[nodiscard]] static MeasurementModel from_grid(const GridModel& grid, double angle_variance_deg2,
                                                  double flow_sigma_pu = 0.0);

  [[nodiscard]] std::size_t measurements() const noexcept { return static_cast<std::size_t>(h.rows()); }
  [[nodiscard]] std::size_t states() const noexcept { return static_cast<std::size_t>(h.cols()); }
};

struct WlsResult {
  Eigen::VectorXd x_hat;       // reduced state (slack removed), radians
  Eigen::VectorXd residual;    // z - H x_hat
  Eigen::VectorXd normalized;  // r_i / sqrt(Omega_ii); 0 where Omega_ii vanishes
  Eigen::MatrixXd covariance;  // (H^T R^-1 H)^-1
  double objective = 0.0;      // r^T R^-1 r
};

// x_hat = (H^T R^-1 H)^-1 H^T R^-1 z with Omega = R - H (H^T R^-1 H)^-1 H^T.
// Throws SingularSystem when H^T R^-1 H cannot be factored and
// InvalidArgument on shape mismatch or a non positive definite R.
[[nodiscard]] WlsResult wls_estimate(const Eigen::MatrixXd& h, const Eigen::MatrixXd& r,
                                     const Eigen::VectorXd& z);
[[nodiscard]] WlsResult wls_estimate(const MeasurementModel& model, const Eigen::VectorXd& z);

[[nodiscard]] double max_abs_normalized(const WlsResult& wls) noexcept;

// max_i |normalized_i| > beta.
[[nodiscard]] bool lnr_test(const WlsResult& wls, double beta) noexcept;

// Euclidean norm of the whitened residual R^-1/2 (z - H x_hat).
[[nodiscard]] double whitened_residual_norm(const MeasurementModel& model, const WlsResult& wls);

struct KalmanState {
  Eigen::VectorXd x_hat;
  Eigen::MatrixXd p;
  Eigen::MatrixXd k;      // last gain
  Eigen::VectorXd w;      // diagonal of the weighting matrix W = R^-1
  Eigen::VectorXd w_min;  // lower clamp on w under the DKF rule
  Eigen::MatrixXd a;
  Eigen::MatrixXd q;
  Eigen::MatrixXd h;
  Eigen::VectorXd innovation;             // z - H x(t|t-1) of the last step
  Eigen::VectorXd normalized_innovation;  // innovation / sqrt(diag(H P H^T + W^-1))
};

struct KalmanOptions {
  double q_scale = 1e-4;           // Q = q_scale * I
  double weight_cap = 1e6;         // W^-1 may grow to at most cap x its initial value
  bool deviation_weighting = true; // apply dkf_update_weights every step
};

// A = I, Q from options, W = R^-1. The state starts at the WLS estimate of
// z0 with its covariance.
[[nodiscard]] KalmanState kf_init(const MeasurementModel& model, const Eigen::VectorXd& z0,
                                  const KalmanOptions& options = {});

// One time + measurement update using the current W. Throws SingularSystem
// if the innovation covariance cannot be inverted.
[[nodiscard]] KalmanState kf_step(KalmanState state, const Eigen::VectorXd& z);

// Deviation-weighted step: the innovation of this frame rescales W before
// the gain is formed. The reported normalized innovation uses the weights
// in force when the frame arrived.
[[nodiscard]] KalmanState dkf_step(KalmanState state, const Eigen::VectorXd& z);

// W_new^-1 = W^-1 * exp(|innovation|) elementwise on the diagonal, i.e.
// W_new = W * exp(-|innovation|). With w_min given, entries never fall below it.
[[nodiscard]] Eigen::VectorXd dkf_update_weights(const Eigen::VectorXd& w,
                                                 const Eigen::VectorXd& innovation,
                                                 const Eigen::VectorXd* w_min = nullptr);

struct ResidualSeries {
  std::vector<double> max_normalized;  // per frame
  std::vector<bool> flags;             // max_normalized > beta
  double beta = 3.0;

  [[nodiscard]] double peak() const noexcept;
  [[nodiscard]] bool any() const noexcept;
};

[[nodiscard]] ResidualSeries wls_residual_series(const PhasorStream& stream,
                                                 const MeasurementModel& model, double beta);

// The first frame initializes the filter and reports 0.
// Throws InvalidArgument for fewer than two frames.
[[nodiscard]] ResidualSeries dkf_residual_series(const PhasorStream& stream,
                                                 const MeasurementModel& model, double beta,
                                                 const KalmanOptions& options = {});

// Moving-window low-rank error on the unwrapped channel. Entry k covers
// samples (k - W + 1 .. k); the first W - 1 entries are NaN.
// Throws InvalidArgument when the channel is not longer than W.
[[nodiscard]] std::vector<double> hankel_error_series(std::span<const double> channel,
                                                      std::size_t window, int rank);

struct GradientReport {
  std::vector<int> flags;          // 1 where the two gradients disagree in sign
  std::vector<bool> valid;         // both gradients defined at this frame
  std::vector<double> rate;        // trailing-window mean of flags
  double overall_rate = 0.0;       // over frames where both gradients exist

  // Mean flag over valid frames with timestamps in [t_from, t_to); 0 when
  // there are none.
  [[nodiscard]] double rate_between(std::span<const double> timestamps, double t_from,
                                    double t_to) const;
};

// Backward differences of both series over dt. A frame is flagged when both
// gradients clear the dead-band and their signs differ; NaN gradients and
// the first frame are neutral. `rate_window` frames feed the trailing rate.
// Throws InvalidArgument on a length mismatch.
[[nodiscard]] GradientReport gradient_sign_detector(std::span<const double> err_i,
                                                    std::span<const double> err_j, double dt,
                                                    double deadband = 1e-9,
                                                    std::size_t rate_window = 60);

struct DetectorVerdict {
  std::string name;
  std::vector<int> flags;  // one per frame
  bool detected = false;
  std::optional<double> first_detection_s;

  [[nodiscard]] static DetectorVerdict from_flags(std::string name, std::vector<int> flags,
                                                  std::span<const double> timestamps);
};

}  // namespace spoofsim::detect
