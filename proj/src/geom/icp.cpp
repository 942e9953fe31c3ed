#include "vat/geom/icp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vat/geom/point_index.hpp"
#include "vat/nd/parallel.hpp"

namespace vat::geom {

namespace {

bool all_identical(const std::vector<Vec3>& pts) {
  for (const Vec3& p : pts) {
    if (norm2(p - pts[0]) > 1e-12f) return false;
  }
  return true;
}

// Best-fit rigid motion mapping src onto dst (same length, paired), via the
// SVD of the cross-covariance (Kabsch).
RigidTransform fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  const std::size_t n = src.size();
  Eigen::Vector3d sbar = Eigen::Vector3d::Zero(), dbar = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    sbar += Eigen::Vector3d(src[i].x, src[i].y, src[i].z);
    dbar += Eigen::Vector3d(dst[i].x, dst[i].y, dst[i].z);
  }
  sbar /= static_cast<double>(n);
  dbar /= static_cast<double>(n);

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector3d p(src[i].x, src[i].y, src[i].z);
    Eigen::Vector3d q(dst[i].x, dst[i].y, dst[i].z);
    h += (p - sbar) * (q - dbar).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d r = v * u.transpose();
  if (r.determinant() < 0) {  // reflection: flip the least-significant axis
    v.col(2) *= -1.0;
    r = v * u.transpose();
  }
  Eigen::Vector3d t = dbar - r * sbar;

  RigidTransform out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.rotation[i][j] = static_cast<float>(r(i, j));
  }
  out.translation = Vec3{static_cast<float>(t(0)), static_cast<float>(t(1)),
                         static_cast<float>(t(2))};
  return out;
}

// Mean closest-point distance of pts into the index, filling correspondences.
double mean_nn_distance(const std::vector<Vec3>& pts, const PointIndex& index,
                        std::vector<Vec3>* corr) {
  if (corr) corr->resize(pts.size());
  std::vector<double> partial(pts.size());
  vat::nd::parallel_for(static_cast<int64_t>(pts.size()), [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      float d2 = 0.0f;
      int j = index.nearest(pts[static_cast<std::size_t>(i)], &d2);
      if (corr) {
        (*corr)[static_cast<std::size_t>(i)] = index.points()[static_cast<std::size_t>(j)];
      }
      partial[static_cast<std::size_t>(i)] = std::sqrt(static_cast<double>(d2));
    }
  });
  double sum = 0.0;
  for (double d : partial) sum += d;
  return sum / static_cast<double>(pts.size());
}

}  // namespace

float RigidTransform::angle() const {
  float tr = rotation[0][0] + rotation[1][1] + rotation[2][2];
  float c = std::clamp((tr - 1.0f) * 0.5f, -1.0f, 1.0f);
  return std::acos(c);
}

IcpResult icp_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                    int max_iter, float tol) {
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("icp_align: empty point cloud");
  }
  if (max_iter < 0 || tol < 0) {
    throw std::invalid_argument("icp_align: negative max_iter or tol");
  }

  IcpResult result;
  result.transform = RigidTransform::identity();
  result.aligned = source;

  if (all_identical(source) || all_identical(target)) {
    PointIndex index(target);
    result.residual = static_cast<float>(mean_nn_distance(source, index, nullptr));
    return result;
  }

  PointIndex index(target);
  std::vector<Vec3> corr;
  double best = mean_nn_distance(result.aligned, index, &corr);

  for (int it = 0; it < max_iter; ++it) {
    // Re-fit the full transform from the original source to the current
    // correspondences (more stable than composing per-step deltas).
    RigidTransform cand = fit_rigid(source, corr);
    std::vector<Vec3> moved(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) moved[i] = cand.apply(source[i]);
    std::vector<Vec3> cand_corr;
    double cand_res = mean_nn_distance(moved, index, &cand_corr);
    if (cand_res >= best) break;  // reject non-improving steps
    double improvement = best - cand_res;
    best = cand_res;
    result.transform = cand;
    result.aligned = std::move(moved);
    corr = std::move(cand_corr);
    result.iterations = it + 1;
    if (improvement < static_cast<double>(tol)) break;
  }

  result.residual = static_cast<float>(best);
  return result;
}

}  // namespace vat::geom
