#pragma once

#include "entangle/common.hpp"
#include "entangle/network.hpp"

#include "json.hpp"

#include <atomic>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>

namespace entangle {

/// One finite-difference stencil point: base + a e_i + b e_j.
struct StencilOffset {
  int i = 0;
  int j = 0;
  double a = 0.0;
  double b = 0.0;
};

/// Raised when the oracle returns NaN or Inf; carries the queried point.
class NonFiniteQueryError : public NumericalError {
 public:
  NonFiniteQueryError(const std::string& what, Vec point)
      : NumericalError(what), point_(std::move(point)) {}
  const Vec& point() const { return point_; }

 private:
  Vec point_;
};

/// Black-box access to x -> f(x) in R^{m_L}. Every evaluated point counts as
/// one query; the counter is safe to bump from several workers.
class QueryOracle {
 public:
  virtual ~QueryOracle() = default;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;

  /// Columns of `points` are inputs; returns output_dim x N.
  Mat query(const Mat& points) const;
  /// Values at base + a e_i + b e_j for each offset; output_dim x offsets.size().
  Mat query_stencil(const Vec& base, std::span<const StencilOffset> offsets) const;

  std::uint64_t query_count() const { return queries_.load(); }
  void reset_query_count() { queries_.store(0); }

 protected:
  virtual Mat evaluate(const Mat& points) const = 0;
  /// Default builds the points explicitly. Subclasses may exploit structure.
  virtual Mat evaluate_stencil(const Vec& base, std::span<const StencilOffset> offsets) const;

 private:
  mutable std::atomic<std::uint64_t> queries_{0};
};

/// Oracle backed by a known network (the teacher).
class NetworkOracle final : public QueryOracle {
 public:
  explicit NetworkOracle(NetworkParams net);
  int input_dim() const override { return net_.input_dim(); }
  int output_dim() const override { return net_.output_dim(); }
  const NetworkParams& network() const { return net_; }

 protected:
  Mat evaluate(const Mat& points) const override;
  /// First-layer pre-activations are shared by all stencil points, so only
  /// the two touched rows of W_1 are added per point.
  Mat evaluate_stencil(const Vec& base, std::span<const StencilOffset> offsets) const override;

 private:
  NetworkParams net_;
};

/// Oracle around an arbitrary vector function.
class FunctionOracle final : public QueryOracle {
 public:
  FunctionOracle(int input_dim, int output_dim, std::function<Vec(const Vec&)> f);
  int input_dim() const override { return in_; }
  int output_dim() const override { return out_; }

 protected:
  Mat evaluate(const Mat& points) const override;

 private:
  int in_;
  int out_;
  std::function<Vec(const Vec&)> f_;
};

/// Distribution of Hessian locations.
struct SamplingLaw {
  enum class Kind { UniformSphere, Gaussian };
  Kind kind = Kind::UniformSphere;
  double scale = 0.01;  // radius R, or standard deviation sigma
  Vec center;           // x*; empty means the origin

  static SamplingLaw sphere(int dim, double radius);
  static SamplingLaw gaussian(int dim, double sigma);

  void validate(int dim) const;
  Vec center_or_zero(int dim) const;
  /// Sub-Gaussian norm of X - x*: R/sqrt(D) on the sphere, sigma for Gaussians.
  double psi2_norm(int dim) const;
  std::string describe() const;
};

nlohmann::json to_json(const SamplingLaw& law);
SamplingLaw sampling_law_from_json(const nlohmann::json& j);

/// N i.i.d. draws, one per column.
Mat sample_points(const SamplingLaw& law, int dim, int count, std::uint64_t seed);

/// grad f_p(x) = W_1 G_1(x) ... W_L G_L(x) e_p.
Vec analytic_gradient(const NetworkParams& net, const Vec& x, int p);
/// Full Jacobian, D x m_L; column p is the gradient of f_p.
Mat analytic_jacobian(const NetworkParams& net, const Vec& x);

/// sum_l V_l(x) S_p^[l](x) V_l(x)^T; bitwise symmetric.
Mat analytic_hessian(const NetworkParams& net, const Vec& x, int p);
/// All m_L Hessians at x.
std::vector<Mat> analytic_hessians(const NetworkParams& net, const Vec& x);

/// Central four-point second difference, for all outputs at once.
/// Uses exactly 2D^2 + 2D oracle queries.
std::vector<Mat> fd_hessians(const QueryOracle& oracle, const Vec& x, double eps);
Mat fd_hessian(const QueryOracle& oracle, const Vec& x, double eps, int p);

/// Stack of packed Hessians at N locations for all outputs.
struct HessianBatch {
  enum class Source { Analytic, FiniteDifference };

  int dim = 0;
  int outputs = 0;
  Mat points;  // D x N
  Mat packed;  // D(D+1)/2 x (N m_L), column p*N + i holds output p at point i
  Source source = Source::Analytic;
  double epsilon = 0.0;
  SamplingLaw law;

  int locations() const { return static_cast<int>(points.cols()); }
  Mat hessian(int location, int output) const;
  /// Columns belonging to every output except `output`.
  Mat packed_without_output(int output) const;
  /// Same columns with each Hessian scaled to unit Frobenius norm (zeros kept).
  Mat normalized_packed() const;
};

HessianBatch analytic_hessian_batch(const NetworkParams& net, const Mat& points,
                                    const SamplingLaw& law = {});
HessianBatch fd_hessian_batch(const QueryOracle& oracle, const Mat& points, double eps,
                              const SamplingLaw& law = {});

/// One row per (location, output): column-major vec of the full D x D matrix.
void write_csv(const HessianBatch& batch, std::ostream& os);

}  // namespace entangle
