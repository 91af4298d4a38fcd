#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dagan {

using Index = Eigen::Index;

/// Row-major dense matrix. Row-major storage lets a batch of flattened
/// samples be reshaped (B*S rows <-> B rows) without copying.
template <typename Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = MatrixR<double>;
using RowVec = Eigen::RowVectorXd;
using Vec = Eigen::VectorXd;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// A trainable tensor. `shape` is the logical extent list; `value` stores it
/// as shape[0] x product(shape[1:]) so conv kernels (out x in x k) and dense
/// weights share one representation.
struct Parameter {
  std::vector<Index> shape;
  Mat value;
  Mat grad;
  bool frozen = false;

  Index size() const { return value.size(); }
};

/// Named, ordered collection of parameters. Ordering is lexicographic by id,
/// which fixes iteration order for serialization and the optimizer.
class ParamSet {
 public:
  using Map = std::map<std::string, Parameter>;

  /// Adds a zero-initialized parameter. Duplicate ids are rejected.
  Parameter& add(const std::string& id, std::vector<Index> shape);

  Parameter& at(const std::string& id);
  const Parameter& at(const std::string& id) const;
  bool contains(const std::string& id) const { return params_.count(id) != 0; }

  void zero_grad();
  Index parameter_count() const;
  std::size_t size() const { return params_.size(); }

  /// Global L2 norm of gradients over non-frozen parameters.
  double grad_norm() const;
  /// Rescales non-frozen gradients so that their global L2 norm is at most `max_norm`.
  void clip_grad_norm(double max_norm);

  /// Freezes (or thaws) every parameter whose id starts with `prefix`.
  void set_frozen(const std::string& prefix, bool frozen);

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  bool operator==(const ParamSet& other) const;

 private:
  Map params_;
};

/// Glorot-uniform fill: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Parameter& p, Index fan_in, Index fan_out, Rng& rng);

/// True when every entry is finite.
template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace dagan
