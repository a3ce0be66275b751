#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "aaa/error.hpp"
#include "aaa/geometry.hpp"

namespace aaa {

namespace {

// Conic A x^2 + B xy + C y^2 + D x + E y + F = 0 to center/axes/angle.
EllipseParams conic_to_params(const Eigen::Matrix<double, 6, 1>& c) {
  double A = c(0), B = c(1), C = c(2), D = c(3), E = c(4), F = c(5);
  const double disc = B * B - 4.0 * A * C;
  if (!(disc < 0.0)) throw NumericError("fitted conic is not an ellipse");
  const double det = 4.0 * A * C - B * B;
  const double cx = (B * E - 2.0 * C * D) / det;
  const double cy = (B * D - 2.0 * A * E) / det;
  double f0 = F + 0.5 * (D * cx + E * cy);
  Eigen::Matrix2d q;
  q << A, 0.5 * B, 0.5 * B, C;
  if (f0 > 0.0) {
    q = -q;
    f0 = -f0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(q);
  const double l_small = eig.eigenvalues()(0), l_large = eig.eigenvalues()(1);
  if (!(l_small > 0.0) || !(f0 < 0.0))
    throw NumericError("fitted conic is an imaginary or degenerate ellipse");
  EllipseParams p;
  p.cx = cx;
  p.cy = cy;
  p.a = std::sqrt(-f0 / l_small);
  p.b = std::sqrt(-f0 / l_large);
  const Eigen::Vector2d major = eig.eigenvectors().col(0);
  double phi = std::atan2(major(1), major(0));
  if (phi < 0.0) phi += std::numbers::pi;
  if (phi >= std::numbers::pi) phi -= std::numbers::pi;
  p.phi = phi;
  return p;
}

}  // namespace

EllipseParams fit_ellipse(std::span<const Point2> points) {
  const std::size_t n = points.size();
  if (n < 6)
    throw std::invalid_argument("ellipse fit needs at least 6 points, got " +
                                std::to_string(n));

  // Center and scale the points for conditioning.
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double scale = 0.0;
  for (const auto& p : points)
    scale = std::max({scale, std::abs(p.x - mx), std::abs(p.y - my)});
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw NumericError("ellipse fit on coincident points");

  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (points[i].x - mx) / scale;
    const double y = (points[i].y - my) / scale;
    d1.row(static_cast<Eigen::Index>(i)) << x * x, x * y, y * y;
    d2.row(static_cast<Eigen::Index>(i)) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;

  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  lu.setThreshold(1e-12);
  if (lu.rank() < 3) throw NumericError("ellipse fit on collinear points");

  // Linear part as a function of the quadratic part: a2 = t a1.
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;
  // Premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]].
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  int chosen = -1;
  double best_cond = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3cd v = es.eigenvectors().col(k);
    if (std::abs(es.eigenvalues()(k).imag()) > 1e-12 * (1.0 + std::abs(es.eigenvalues()(k).real())))
      continue;
    const Eigen::Vector3d vr = v.real();
    const double cond = 4.0 * vr(0) * vr(2) - vr(1) * vr(1);
    if (cond > best_cond) {
      best_cond = cond;
      chosen = k;
    }
  }
  if (chosen < 0)
    throw NumericError("no elliptic solution for the point set");

  const Eigen::Vector3d a1 = es.eigenvectors().col(chosen).real();
  const Eigen::Vector3d a2 = t * a1;
  Eigen::Matrix<double, 6, 1> conic;
  conic << a1, a2;
  EllipseParams p = conic_to_params(conic);
  p.cx = p.cx * scale + mx;
  p.cy = p.cy * scale + my;
  p.a *= scale;
  p.b *= scale;
  if (!std::isfinite(p.a) || !std::isfinite(p.b) || !(p.b > 0.0))
    throw NumericError("ellipse fit produced non-finite axes");
  return p;
}

}  // namespace aaa
