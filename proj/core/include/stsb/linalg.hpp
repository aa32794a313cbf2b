#ifndef STSB_LINALG_HPP
#define STSB_LINALG_HPP

#include <Eigen/Dense>

#include "stsb/core.hpp"

namespace stsb {

/// Lower-triangular factor of `cov` plus diagonal jitter. The first attempt
/// adds `jitter`; each of up to three retries multiplies it by 10. Throws
/// FactorizationFailure when all attempts fail.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov, double jitter);

/// mean + L z with z standard normal.
Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& lower, Rng& rng);

}  // namespace stsb

#endif  // STSB_LINALG_HPP
