#pragma once

#include "sacl/types.hpp"

#include <vector>

namespace sacl {

/// Upper-triangular store of 3x3 blocks keyed by robot pair (i < j).
/// get(j, i) for i < j serves the transpose of the stored block.
class PairBlockStore {
 public:
  PairBlockStore() = default;
  explicit PairBlockStore(std::size_t team_size);

  std::size_t team_size() const { return team_size_; }
  std::size_t pair_count() const { return blocks_.size(); }

  Mat3 get(RobotId i, RobotId j) const;
  void set(RobotId i, RobotId j, const Mat3& block);

  /// Direct access to the stored block for i < j.
  Mat3& upper(RobotId i, RobotId j);
  const Mat3& upper(RobotId i, RobotId j) const;

  /// Flat storage in row-major pair order (1,2), (1,3), ..., (N-1,N).
  const std::vector<Mat3>& blocks() const { return blocks_; }
  std::vector<Mat3>& blocks() { return blocks_; }

  /// Inverse of the flat index mapping.
  std::pair<RobotId, RobotId> pair_at(std::size_t flat) const;

 private:
  std::size_t flat_index(RobotId i, RobotId j) const;

  std::size_t team_size_ = 0;
  std::vector<Mat3> blocks_;
};

/// Throws NumericalError unless every eigenvalue of S is >= 1e-12 * trace(S).
void require_innovation_pd(const Mat2& s);

/// Unique symmetric positive-definite S^{-1/2}; S must already pass require_innovation_pd.
Mat2 inverse_sqrt_spd(const Mat2& s);

Mat3 symmetrized(const Mat3& m);
double min_eigenvalue(const Mat3& m);
double condition_number(const Mat3& m);

}  // namespace sacl
