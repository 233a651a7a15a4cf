#pragma once

#include <Eigen/Core>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace vgsil {

struct ImagePoint {
  double u = 0.0;
  double v = 0.0;

  Eigen::Vector3d homogeneous() const { return {u, v, 1.0}; }
  friend bool operator==(const ImagePoint&, const ImagePoint&) = default;
};

/// Homogeneous line a*u + b*v + c = 0 with a^2 + b^2 = 1 and the first
/// nonzero of (a, b) positive.
class HomLine {
 public:
  /// Normalizes arbitrary coefficients. Throws if (a, b) == (0, 0).
  static HomLine from_coefficients(double a, double b, double c);

  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }
  Eigen::Vector3d coefficients() const { return {a_, b_, c_}; }

 private:
  HomLine(double a, double b, double c) : a_(a), b_(b), c_(c) {}
  double a_, b_, c_;
};

/// Symmetric 3x3 conic scaled to unit Frobenius norm.
class Conic {
 public:
  static Conic from_matrix(const Eigen::Matrix3d& m);
  const Eigen::Matrix3d& matrix() const { return c_; }

 private:
  explicit Conic(const Eigen::Matrix3d& c) : c_(c) {}
  Eigen::Matrix3d c_;
};

enum class KernelKind { p2p, p2l, l2l, p2c };

std::string_view to_string(KernelKind kind);
KernelKind kernel_kind_from_string(std::string_view name);

/// Error dimension per kernel kind: p2p 2, p2l 1, l2l 2, p2c 1.
int error_dimension(KernelKind kind);

struct ErrorSignal {
  KernelKind kind = KernelKind::p2p;
  Eigen::VectorXd values;
  int frame_index = 0;

  double norm() const { return values.norm(); }
};

using Segment = std::pair<ImagePoint, ImagePoint>;

HomLine line_through(const ImagePoint& p, const ImagePoint& q);

/// Exact conic through five points in general position.
Conic conic_through(std::span<const ImagePoint> points);

ErrorSignal p2p_error(const ImagePoint& p1, const ImagePoint& p2);
ErrorSignal p2l_error(const ImagePoint& p, const HomLine& l);
ErrorSignal l2l_error(const Segment& seg, const HomLine& l);
ErrorSignal p2c_error(const ImagePoint& p, const Conic& c);

}  // namespace vgsil
