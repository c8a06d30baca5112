#pragma once

// Thin adapter over Eigen's MINPACK-derived Levenberg-Marquardt solver.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

namespace ccatomo::detail {

using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;
using JacobianFn = std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd& jac)>;

struct LmOptions {
  long max_evaluations = 400;
  double ftol = 1e-14;
  double xtol = 1e-14;
  double gtol = 0.0;
  double factor = 100.0;
  // Stop once the squared residual norm improves by less than `stall_tol`
  // (relative) over `stall_window` iterations; 0 disables the check.
  long stall_window = 0;
  double stall_tol = 1e-9;
};

struct LmOutcome {
  Eigen::VectorXd x;
  int status = 0;
  long evaluations = 0;
  long iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
  bool stalled = false;
};

// Forward differences, column by column. Step is relative to |x_j| with an
// absolute floor.
inline void forward_difference_jacobian(const ResidualFn& residual, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& r0, Eigen::MatrixXd& jac,
                                        double rel_step = 1e-7, double abs_step = 1e-9) {
  jac.resize(r0.size(), x.size());
  Eigen::VectorXd xp = x, rp(r0.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = std::max(rel_step * std::abs(x(j)), abs_step);
    xp(j) = x(j) + h;
    residual(xp, rp);
    jac.col(j) = (rp - r0) / h;
    xp(j) = x(j);
  }
}

// Central differences; twice the cost, roughly the square of the accuracy.
inline void central_difference_jacobian(const ResidualFn& residual, const Eigen::VectorXd& x,
                                        Eigen::Index m, Eigen::MatrixXd& jac,
                                        double rel_step = 1e-6, double abs_step = 1e-8) {
  jac.resize(m, x.size());
  Eigen::VectorXd xp = x, rp(m), rm(m);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = std::max(rel_step * std::abs(x(j)), abs_step);
    xp(j) = x(j) + h;
    residual(xp, rp);
    xp(j) = x(j) - h;
    residual(xp, rm);
    jac.col(j) = (rp - rm) / (2.0 * h);
    xp(j) = x(j);
  }
}

namespace lm_impl {

struct Functor : Eigen::DenseFunctor<double> {
  Functor(int inputs, int values, const ResidualFn& f, const JacobianFn& j)
      : Eigen::DenseFunctor<double>(inputs, values), residual(f), jacobian(j) {}
  int operator()(const InputType& x, ValueType& fvec) const {
    residual(x, fvec);
    return 0;
  }
  int df(const InputType& x, JacobianType& fjac) const {
    jacobian(x, fjac);
    return 0;
  }
  const ResidualFn& residual;
  const JacobianFn& jacobian;
};

}  // namespace lm_impl

inline LmOutcome levenberg_marquardt(Eigen::VectorXd x0, Eigen::Index m, const ResidualFn& residual,
                                     const JacobianFn& jacobian, const LmOptions& opts) {
  using namespace Eigen::LevenbergMarquardtSpace;
  lm_impl::Functor functor(int(x0.size()), int(m), residual, jacobian);
  Eigen::LevenbergMarquardt<lm_impl::Functor> lm(functor);
  lm.setMaxfev(opts.max_evaluations);
  lm.setFtol(opts.ftol);
  lm.setXtol(opts.xtol);
  lm.setGtol(opts.gtol);
  lm.setFactor(opts.factor);
  LmOutcome out;
  Status status = lm.minimizeInit(x0);
  if (status != ImproperInputParameters) {
    std::vector<double> history;
    do {
      status = lm.minimizeOneStep(x0);
      const double f2 = lm.fnorm() * lm.fnorm();
      history.push_back(f2);
      const auto w = std::size_t(std::max<long>(opts.stall_window, 0));
      if (status == Running && w > 0 && history.size() > w &&
          history[history.size() - 1 - w] - f2 <= opts.stall_tol * history[history.size() - 1 - w]) {
        out.stalled = true;
        break;
      }
    } while (status == Running);
  }

  out.x = std::move(x0);
  out.status = int(status);
  out.evaluations = lm.nfev();
  out.iterations = lm.iterations();
  out.residual_norm = lm.fnorm();
  out.converged = status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                  status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall ||
                  status == FtolTooSmall || status == XtolTooSmall || status == GtolTooSmall ||
                  out.stalled;
  return out;
}

}  // namespace ccatomo::detail
