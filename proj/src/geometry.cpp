#include "vgsil/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>

#include "vgsil/error.hpp"

namespace vgsil {

namespace {
constexpr double kCoincidentTol = 1e-9;
}

HomLine HomLine::from_coefficients(double a, double b, double c) {
  const double n = std::hypot(a, b);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::coincident_points, "line has (a, b) = (0, 0)");
  }
  a /= n;
  b /= n;
  c /= n;
  const double lead = a != 0.0 ? a : b;
  if (lead < 0.0) {
    a = -a;
    b = -b;
    c = -c;
  }
  return HomLine(a, b, c);
}

Conic Conic::from_matrix(const Eigen::Matrix3d& m) {
  const Eigen::Matrix3d sym = 0.5 * (m + m.transpose());
  const double n = sym.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::invalid_config, "conic matrix must be finite and nonzero");
  }
  return Conic(sym / n);
}

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::p2p: return "p2p";
    case KernelKind::p2l: return "p2l";
    case KernelKind::l2l: return "l2l";
    case KernelKind::p2c: return "p2c";
  }
  return "p2p";
}

KernelKind kernel_kind_from_string(std::string_view name) {
  if (name == "p2p") return KernelKind::p2p;
  if (name == "p2l") return KernelKind::p2l;
  if (name == "l2l") return KernelKind::l2l;
  if (name == "p2c") return KernelKind::p2c;
  throw Error(Errc::invalid_config, "unknown kernel kind '" + std::string(name) + "'");
}

int error_dimension(KernelKind kind) {
  switch (kind) {
    case KernelKind::p2p: return 2;
    case KernelKind::p2l: return 1;
    case KernelKind::l2l: return 2;
    case KernelKind::p2c: return 1;
  }
  return 0;
}

HomLine line_through(const ImagePoint& p, const ImagePoint& q) {
  if (std::hypot(p.u - q.u, p.v - q.v) < kCoincidentTol) {
    throw Error(Errc::coincident_points, "cannot build a line through one point");
  }
  const Eigen::Vector3d l = p.homogeneous().cross(q.homogeneous());
  return HomLine::from_coefficients(l.x(), l.y(), l.z());
}

Conic conic_through(std::span<const ImagePoint> points) {
  if (points.size() < 5) {
    throw Error(Errc::too_few_features, "a conic needs five points");
  }
  // Rows of the design matrix for [a b c d e f] in
  // a u^2 + b uv + c v^2 + d u + e v + f = 0. Coordinates are centered and
  // scaled first so the null vector is well conditioned in pixel units.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : points) mean += Eigen::Vector2d(p.u, p.v);
  mean /= static_cast<double>(points.size());
  double scale = 0.0;
  for (const auto& p : points) scale += (Eigen::Vector2d(p.u, p.v) - mean).norm();
  scale = scale > 0.0 ? static_cast<double>(points.size()) / scale : 1.0;

  Eigen::MatrixXd design(points.size(), 6);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = (points[i].u - mean.x()) * scale;
    const double y = (points[i].v - mean.y()) * scale;
    design.row(static_cast<Eigen::Index>(i)) << x * x, x * y, y * y, x, y, 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const Eigen::VectorXd k = svd.matrixV().col(5);

  Eigen::Matrix3d normalized;
  normalized << k(0), k(1) / 2, k(3) / 2,
                k(1) / 2, k(2), k(4) / 2,
                k(3) / 2, k(4) / 2, k(5);
  // x_norm = T x_pixel, so C_pixel = T^T C_norm T.
  Eigen::Matrix3d t;
  t << scale, 0, -scale * mean.x(),
       0, scale, -scale * mean.y(),
       0, 0, 1;
  return Conic::from_matrix(t.transpose() * normalized * t);
}

ErrorSignal p2p_error(const ImagePoint& p1, const ImagePoint& p2) {
  return {KernelKind::p2p, Eigen::Vector2d(p1.u - p2.u, p1.v - p2.v), 0};
}

ErrorSignal p2l_error(const ImagePoint& p, const HomLine& l) {
  Eigen::VectorXd v(1);
  v(0) = l.a() * p.u + l.b() * p.v + l.c();
  return {KernelKind::p2l, v, 0};
}

ErrorSignal l2l_error(const Segment& seg, const HomLine& l) {
  if (std::hypot(seg.first.u - seg.second.u, seg.first.v - seg.second.v) < kCoincidentTol) {
    throw Error(Errc::coincident_points, "segment endpoints coincide");
  }
  const double r1 = l.a() * seg.first.u + l.b() * seg.first.v + l.c();
  const double r2 = l.a() * seg.second.u + l.b() * seg.second.v + l.c();
  return {KernelKind::l2l, Eigen::Vector2d(r1, r2), 0};
}

ErrorSignal p2c_error(const ImagePoint& p, const Conic& c) {
  const Eigen::Vector3d x = p.homogeneous();
  Eigen::VectorXd v(1);
  v(0) = x.dot(c.matrix() * x);
  return {KernelKind::p2c, v, 0};
}

}  // namespace vgsil
