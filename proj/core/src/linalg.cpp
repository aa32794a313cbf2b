#include "stsb/linalg.hpp"

#include "stsb/random.hpp"

namespace stsb {

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov, double jitter) {
  const Eigen::Index n = cov.rows();
  double eps = jitter;
  for (int attempt = 0; attempt < 4; ++attempt, eps *= 10.0) {
    Eigen::MatrixXd a = cov;
    a.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd l = llt.matrixL();
      if (l.allFinite()) return l;
    }
  }
  throw Error(ErrorCode::FactorizationFailure,
              "covariance of size " + std::to_string(n) + " not positive definite after jitter escalation");
}

Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& lower, Rng& rng) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rnd::normal(rng);
  return mean + lower.triangularView<Eigen::Lower>() * z;
}

}  // namespace stsb
