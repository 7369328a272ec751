#include "spoofsim/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "spoofsim/errors.hpp"
#include "spoofsim/hankel.hpp"

namespace spoofsim::detect {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

MeasurementModel MeasurementModel::from_grid(const GridModel& grid, double angle_variance_deg2,
                                             double flow_sigma_pu) {
  if (!(angle_variance_deg2 >= 0.0) || !(flow_sigma_pu >= 0.0)) {
    throw InvalidArgument("measurement model: variances must be non-negative");
  }
  MeasurementModel m;
  m.h_full = grid::build_measurement_jacobian(grid);
  m.h = grid::reduced_jacobian(grid);
  const double deg = std::numbers::pi / 180.0;
  const double var_theta = angle_variance_deg2 * deg * deg;
  m.r = var_theta * m.h_full.rowwise().squaredNorm() +
        Eigen::VectorXd::Constant(m.h_full.rows(), flow_sigma_pu * flow_sigma_pu);
  if ((m.r.array() <= 0.0).any()) {
    throw InvalidArgument("measurement model: R must be positive definite (zero noise variance)");
  }
  return m;
}

WlsResult wls_estimate(const Eigen::MatrixXd& h, const Eigen::MatrixXd& r, const Eigen::VectorXd& z) {
  if (r.rows() != h.rows() || r.cols() != h.rows() || z.size() != h.rows()) {
    throw InvalidArgument("wls_estimate: shape mismatch between H, R and z");
  }
  if (h.cols() > h.rows()) throw SingularSystem("wls_estimate: more states than measurements");
  const Eigen::LLT<Eigen::MatrixXd> chol_r(symmetrize(r));
  if (chol_r.info() != Eigen::Success) {
    throw InvalidArgument("wls_estimate: R is not positive definite");
  }
  const Eigen::MatrixXd hw = chol_r.matrixL().solve(h);
  const Eigen::VectorXd zw = chol_r.matrixL().solve(z);
  const Eigen::MatrixXd g = hw.transpose() * hw;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
  const Eigen::VectorXd d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * std::max(1.0, d.cwiseAbs().maxCoeff())) {
    throw SingularSystem("wls_estimate: gain matrix H^T R^-1 H is singular (H rank deficient)");
  }

  WlsResult out;
  out.x_hat = ldlt.solve(hw.transpose() * zw);
  out.residual = z - h * out.x_hat;
  out.covariance = symmetrize(ldlt.solve(Eigen::MatrixXd::Identity(g.rows(), g.cols())));
  const Eigen::VectorXd rw = chol_r.matrixL().solve(out.residual);
  out.objective = rw.squaredNorm();

  const Eigen::MatrixXd omega = r - h * out.covariance * h.transpose();
  out.normalized = Eigen::VectorXd::Zero(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    // Critical measurements have Omega_ii = 0: their residual is always 0
    // and they carry no information for this test.
    const double o = omega(i, i);
    if (o > 1e-12 * r(i, i)) out.normalized(i) = out.residual(i) / std::sqrt(o);
  }
  return out;
}

WlsResult wls_estimate(const MeasurementModel& model, const Eigen::VectorXd& z) {
  return wls_estimate(model.h, Eigen::MatrixXd(model.r.asDiagonal()), z);
}

double max_abs_normalized(const WlsResult& wls) noexcept {
  return wls.normalized.size() == 0 ? 0.0 : wls.normalized.cwiseAbs().maxCoeff();
}

bool lnr_test(const WlsResult& wls, double beta) noexcept { return max_abs_normalized(wls) > beta; }

double whitened_residual_norm(const MeasurementModel& model, const WlsResult& wls) {
  if (wls.residual.size() != model.r.size()) {
    throw InvalidArgument("whitened_residual_norm: residual length does not match the model");
  }
  return (wls.residual.array() / model.r.array().sqrt()).matrix().norm();
}

KalmanState kf_init(const MeasurementModel& model, const Eigen::VectorXd& z0,
                    const KalmanOptions& options) {
  if (!(options.q_scale >= 0.0) || !(options.weight_cap >= 1.0)) {
    throw InvalidArgument("kf_init: need q_scale >= 0 and weight_cap >= 1");
  }
  const WlsResult first = wls_estimate(model, z0);
  const auto n = model.h.cols();
  KalmanState s;
  s.x_hat = first.x_hat;
  s.p = first.covariance;
  s.k = Eigen::MatrixXd::Zero(n, model.h.rows());
  s.w = model.r.cwiseInverse();
  s.w_min = s.w / options.weight_cap;
  s.a = Eigen::MatrixXd::Identity(n, n);
  s.q = options.q_scale * Eigen::MatrixXd::Identity(n, n);
  s.h = model.h;
  s.innovation = Eigen::VectorXd::Zero(model.h.rows());
  s.normalized_innovation = Eigen::VectorXd::Zero(model.h.rows());
  return s;
}

namespace {

struct Prediction {
  Eigen::VectorXd x;
  Eigen::MatrixXd p;
  Eigen::MatrixXd hph;  // H P(t|t-1) H^T
};

Prediction time_update(const KalmanState& s) {
  Prediction pr;
  pr.x = s.a * s.x_hat;
  pr.p = symmetrize(s.a * s.p * s.a.transpose() + s.q);
  pr.hph = s.h * pr.p * s.h.transpose();
  return pr;
}

void measurement_update(KalmanState& s, const Prediction& pr, const Eigen::VectorXd& nu) {
  const Eigen::MatrixXd cov = symmetrize(pr.hph + Eigen::MatrixXd(s.w.cwiseInverse().asDiagonal()));
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw SingularSystem("kf_step: innovation covariance is not invertible");
  }
  // K = P H^T S^-1, via S K^T = H P.
  s.k = llt.solve(s.h * pr.p).transpose();
  s.x_hat = pr.x + s.k * nu;
  const auto n = s.x_hat.size();
  const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(n, n) - s.k * s.h;
  s.p = symmetrize(ikh * pr.p);
}

void check_frame(const KalmanState& s, const Eigen::VectorXd& z) {
  if (z.size() != s.h.rows()) throw InvalidArgument("kf_step: measurement length mismatch");
}

Eigen::VectorXd normalize(const Eigen::VectorXd& nu, const Eigen::MatrixXd& hph,
                          const Eigen::VectorXd& w) {
  const Eigen::VectorXd var = hph.diagonal() + w.cwiseInverse();
  return (nu.array().abs() / var.array().sqrt()).matrix();
}

}  // namespace

KalmanState kf_step(KalmanState state, const Eigen::VectorXd& z) {
  check_frame(state, z);
  const Prediction pr = time_update(state);
  state.innovation = z - state.h * pr.x;
  state.normalized_innovation = normalize(state.innovation, pr.hph, state.w);
  measurement_update(state, pr, state.innovation);
  return state;
}

KalmanState dkf_step(KalmanState state, const Eigen::VectorXd& z) {
  check_frame(state, z);
  const Prediction pr = time_update(state);
  state.innovation = z - state.h * pr.x;
  state.normalized_innovation = normalize(state.innovation, pr.hph, state.w);
  state.w = dkf_update_weights(state.w, state.innovation,
                               state.w_min.size() == state.w.size() ? &state.w_min : nullptr);
  measurement_update(state, pr, state.innovation);
  return state;
}

Eigen::VectorXd dkf_update_weights(const Eigen::VectorXd& w, const Eigen::VectorXd& innovation,
                                   const Eigen::VectorXd* w_min) {
  if (w.size() != innovation.size()) {
    throw InvalidArgument("dkf_update_weights: weight and innovation lengths differ");
  }
  if ((w.array() <= 0.0).any()) throw InvalidArgument("dkf_update_weights: W must be positive");
  Eigen::VectorXd out = (w.array() * (-innovation.array().abs()).exp()).matrix();
  if (w_min != nullptr) out = out.cwiseMax(*w_min);
  return out;
}

double ResidualSeries::peak() const noexcept {
  double m = 0.0;
  for (double v : max_normalized) m = std::max(m, v);
  return m;
}

bool ResidualSeries::any() const noexcept {
  return std::any_of(flags.begin(), flags.end(), [](bool f) { return f; });
}

ResidualSeries wls_residual_series(const PhasorStream& stream, const MeasurementModel& model,
                                   double beta) {
  ResidualSeries out;
  out.beta = beta;
  out.max_normalized.reserve(stream.size());
  out.flags.reserve(stream.size());
  for (const auto& frame : stream.frames) {
    const double v = max_abs_normalized(wls_estimate(model, frame.z));
    out.max_normalized.push_back(v);
    out.flags.push_back(v > beta);
  }
  return out;
}

ResidualSeries dkf_residual_series(const PhasorStream& stream, const MeasurementModel& model,
                                   double beta, const KalmanOptions& options) {
  if (stream.size() < 2) throw InvalidArgument("dkf_residual_series: need at least two frames");
  ResidualSeries out;
  out.beta = beta;
  out.max_normalized.reserve(stream.size());
  out.flags.reserve(stream.size());
  KalmanState s = kf_init(model, stream.frames.front().z, options);
  out.max_normalized.push_back(0.0);
  out.flags.push_back(false);
  for (std::size_t k = 1; k < stream.size(); ++k) {
    s = options.deviation_weighting ? dkf_step(std::move(s), stream.frames[k].z)
                                    : kf_step(std::move(s), stream.frames[k].z);
    const double v = s.normalized_innovation.maxCoeff();
    out.max_normalized.push_back(v);
    out.flags.push_back(v > beta);
  }
  return out;
}

std::vector<double> hankel_error_series(std::span<const double> channel, std::size_t window,
                                        int rank) {
  if (window < 3) throw InvalidArgument("hankel_error_series: window must be at least 3");
  if (channel.size() <= window) {
    throw InvalidArgument("hankel_error_series: channel length " + std::to_string(channel.size()) +
                          " must exceed the window " + std::to_string(window));
  }
  const std::vector<double> unwrapped = hankel::unwrap_phase(channel);
  std::vector<double> out(channel.size(), kNaN);
  const std::size_t kappa = window / 2;
  for (std::size_t end = window; end <= unwrapped.size(); ++end) {
    const std::span<const double> w(unwrapped.data() + end - window, window);
    out[end - 1] = hankel::low_rank_error(hankel::build_hankel(w, kappa), rank);
  }
  return out;
}

double GradientReport::rate_between(std::span<const double> timestamps, double t_from,
                                    double t_to) const {
  if (timestamps.size() != flags.size()) {
    throw InvalidArgument("rate_between: timestamps and flags differ in length");
  }
  std::size_t n = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (!valid[k] || timestamps[k] < t_from || timestamps[k] >= t_to) continue;
    ++n;
    hits += static_cast<std::size_t>(flags[k]);
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

GradientReport gradient_sign_detector(std::span<const double> err_i, std::span<const double> err_j,
                                      double dt, double deadband, std::size_t rate_window) {
  if (err_i.size() != err_j.size()) {
    throw InvalidArgument("gradient_sign_detector: series lengths differ (" +
                          std::to_string(err_i.size()) + " vs " + std::to_string(err_j.size()) + ")");
  }
  if (!(dt > 0.0)) throw InvalidArgument("gradient_sign_detector: dt must be positive");
  if (!(deadband >= 0.0)) throw InvalidArgument("gradient_sign_detector: dead-band must be >= 0");
  if (rate_window == 0) throw InvalidArgument("gradient_sign_detector: rate window must be >= 1");

  const std::size_t n = err_i.size();
  GradientReport out;
  out.flags.assign(n, 0);
  out.valid.assign(n, false);
  out.rate.assign(n, 0.0);
  std::size_t valid_count = 0;
  std::size_t hit_count = 0;
  for (std::size_t k = 1; k < n; ++k) {
    const double gi = (err_i[k] - err_i[k - 1]) / dt;
    const double gj = (err_j[k] - err_j[k - 1]) / dt;
    if (!std::isfinite(gi) || !std::isfinite(gj)) continue;
    out.valid[k] = true;
    ++valid_count;
    if (std::abs(gi) >= deadband && std::abs(gj) >= deadband && (gi > 0.0) != (gj > 0.0)) {
      out.flags[k] = 1;
      ++hit_count;
    }
  }
  std::size_t in_window = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (out.valid[k]) {
      ++in_window;
      hits += static_cast<std::size_t>(out.flags[k]);
    }
    if (k >= rate_window && out.valid[k - rate_window]) {
      --in_window;
      hits -= static_cast<std::size_t>(out.flags[k - rate_window]);
    }
    out.rate[k] = in_window == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(in_window);
  }
  out.overall_rate =
      valid_count == 0 ? 0.0 : static_cast<double>(hit_count) / static_cast<double>(valid_count);
  return out;
}

DetectorVerdict DetectorVerdict::from_flags(std::string name, std::vector<int> flags,
                                            std::span<const double> timestamps) {
  if (timestamps.size() != flags.size()) {
    throw InvalidArgument("detector verdict: flags and timestamps differ in length");
  }
  DetectorVerdict v;
  v.name = std::move(name);
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (flags[k] != 0) {
      v.detected = true;
      v.first_detection_s = timestamps[k];
      break;
    }
  }
  v.flags = std::move(flags);
  return v;
}

}  // namespace spoofsim::detect
