#include "sacl/linalg.hpp"

#include "sacl/errors.hpp"

#include <cmath>
#include <string>

namespace sacl {

PairBlockStore::PairBlockStore(std::size_t team_size)
    : team_size_(team_size),
      blocks_(team_size < 2 ? 0 : team_size * (team_size - 1) / 2, Mat3::Zero()) {}

std::size_t PairBlockStore::flat_index(RobotId i, RobotId j) const {
  if (!i.valid_for(team_size_) || !j.valid_for(team_size_) || !(i < j)) {
    throw ContractError("pair store: invalid pair (" + std::to_string(i.label()) + "," +
                        std::to_string(j.label()) + ")");
  }
  const std::size_t a = i.index();
  const std::size_t b = j.index();
  return a * (2 * team_size_ - a - 1) / 2 + (b - a - 1);
}

std::pair<RobotId, RobotId> PairBlockStore::pair_at(std::size_t flat) const {
  std::size_t a = 0;
  std::size_t row = team_size_ - 1;
  while (flat >= row) {
    flat -= row;
    ++a;
    --row;
  }
  return {RobotId::from_index(a), RobotId::from_index(a + 1 + flat)};
}

Mat3 PairBlockStore::get(RobotId i, RobotId j) const {
  if (i < j) return blocks_[flat_index(i, j)];
  return blocks_[flat_index(j, i)].transpose();
}

void PairBlockStore::set(RobotId i, RobotId j, const Mat3& block) {
  if (i < j) {
    blocks_[flat_index(i, j)] = block;
  } else {
    blocks_[flat_index(j, i)] = block.transpose();
  }
}

Mat3& PairBlockStore::upper(RobotId i, RobotId j) { return blocks_[flat_index(i, j)]; }
const Mat3& PairBlockStore::upper(RobotId i, RobotId j) const {
  return blocks_[flat_index(i, j)];
}

void require_innovation_pd(const Mat2& s) {
  if (!s.allFinite()) throw NumericalError("innovation covariance is not finite");
  const Eigen::SelfAdjointEigenSolver<Mat2> eig(0.5 * (s + s.transpose()),
                                                Eigen::EigenvaluesOnly);
  const double tr = s.trace();
  if (!(tr > 0.0) || eig.eigenvalues().minCoeff() < 1e-12 * tr) {
    throw NumericalError("innovation covariance not positive definite (min eigenvalue " +
                         std::to_string(eig.eigenvalues().minCoeff()) + ")");
  }
}

Mat2 inverse_sqrt_spd(const Mat2& s) {
  const Eigen::SelfAdjointEigenSolver<Mat2> eig(0.5 * (s + s.transpose()));
  return eig.operatorInverseSqrt();
}

Mat3 symmetrized(const Mat3& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Mat3& m) {
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(symmetrized(m), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double condition_number(const Mat3& m) {
  const Eigen::JacobiSVD<Mat3> svd(m);
  const auto& sv = svd.singularValues();
  if (sv(2) == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(2);
}

}  // namespace sacl
