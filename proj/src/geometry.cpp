#include "eanet/geometry.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "eanet/errors.hpp"

namespace eanet {

namespace {
constexpr double kMinDecodedExtent = 1e-3;
}

bool BoundingBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0 && h > 0;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double center_distance(const BoundingBox& a, const BoundingBox& b) {
  return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

BoundingBox clip_to_image(const BoundingBox& box, ImageSize bounds) {
  BoundingBox out = box;
  out.w = std::clamp(out.w, 1.0, static_cast<double>(bounds.width));
  out.h = std::clamp(out.h, 1.0, static_cast<double>(bounds.height));
  const double cx = std::clamp(box.center_x(), out.w / 2, bounds.width - out.w / 2);
  const double cy = std::clamp(box.center_y(), out.h / 2, bounds.height - out.h / 2);
  return BoundingBox::from_center(cx, cy, out.w, out.h);
}

namespace {

BoundingBox draw_one(const BoundingBox& center, const SampleSpec& spec, ImageSize bounds,
                     std::mt19937_64& rng, std::normal_distribution<double>& normal) {
  const double dx = normal(rng) * spec.sigma_xy * center.w;
  const double dy = normal(rng) * spec.sigma_xy * center.h;
  const double s = std::exp(normal(rng) * spec.sigma_scale);
  return clip_to_image(BoundingBox::from_center(center.center_x() + dx, center.center_y() + dy,
                                                center.w * s, center.h * s),
                       bounds);
}

}  // namespace

std::vector<BoundingBox> gaussian_sample(const BoundingBox& center, const SampleSpec& spec,
                                         ImageSize bounds) {
  std::vector<BoundingBox> out;
  out.reserve(spec.n);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < spec.n; ++i) out.push_back(draw_one(center, spec, bounds, rng, normal));
  return out;
}

std::vector<BoundingBox> sample_by_iou(const BoundingBox& gt, std::size_t n, double iou_lo,
                                       double iou_hi, const SampleSpec& spec, ImageSize bounds) {
  if (!(0.0 <= iou_lo && iou_lo <= iou_hi && iou_hi <= 1.0)) {
    throw std::invalid_argument("sample_by_iou: need 0 <= iou_lo <= iou_hi <= 1");
  }
  std::vector<BoundingBox> out;
  out.reserve(n);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t budget = 100 * n;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (attempts == budget) throw SamplingBudgetExhausted(n, out.size(), attempts);
    ++attempts;
    const BoundingBox b = draw_one(gt, spec, bounds, rng, normal);
    const double o = iou(b, gt);
    if (o >= iou_lo && o <= iou_hi) out.push_back(b);
  }
  return out;
}

Eigen::Vector4d encode_offsets(const BoundingBox& box, const BoundingBox& gt) {
  return {(gt.center_x() - box.center_x()) / box.w, (gt.center_y() - box.center_y()) / box.h,
          std::log(gt.w / box.w), std::log(gt.h / box.h)};
}

BoundingBox decode_offsets(const BoundingBox& box, const Eigen::Vector4d& t) {
  const double cx = box.center_x() + t[0] * box.w;
  const double cy = box.center_y() + t[1] * box.h;
  const double w = std::max(box.w * std::exp(t[2]), kMinDecodedExtent);
  const double h = std::max(box.h * std::exp(t[3]), kMinDecodedExtent);
  return BoundingBox::from_center(cx, cy, w, h);
}

RegressorParams regressor_fit(const Eigen::MatrixXd& features, std::span<const BoundingBox> boxes,
                              std::span<const BoundingBox> gts, double lambda) {
  const Eigen::Index m = features.rows();
  const Eigen::Index d = features.cols();
  if (m < 1) throw std::invalid_argument("regressor_fit: no samples");
  if (static_cast<std::size_t>(m) != boxes.size() || boxes.size() != gts.size()) {
    throw std::invalid_argument("regressor_fit: feature/box/gt counts differ");
  }
  if (lambda < 0) throw std::invalid_argument("regressor_fit: negative ridge lambda");

  Eigen::MatrixXd targets(m, 4);
  for (Eigen::Index i = 0; i < m; ++i) targets.row(i) = encode_offsets(boxes[i], gts[i]).transpose();

  RegressorParams params;
  params.ridge_lambda = lambda;
  if (m < d && lambda > 0) {
    // Dual form: W = X^T (X X^T + lambda I)^-1 Y, an m x m solve.
    Eigen::MatrixXd gram = features * features.transpose();
    gram.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    params.weights = features.transpose() * ldlt.solve(targets);
  } else {
    Eigen::MatrixXd normal = features.transpose() * features;
    normal.diagonal().array() += lambda;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
    if (qr.rank() < d) throw std::runtime_error("regressor_fit: singular normal matrix");
    params.weights = qr.solve(features.transpose() * targets);
  }
  if (!params.weights.allFinite()) throw std::runtime_error("regressor_fit: non-finite solution");
  return params;
}

BoundingBox regressor_apply(const RegressorParams& params, const Eigen::VectorXd& feature,
                            const BoundingBox& box) {
  if (feature.size() != params.feature_dim()) {
    throw std::invalid_argument("regressor_apply: feature dim " + std::to_string(feature.size()) +
                                " != " + std::to_string(params.feature_dim()));
  }
  const Eigen::Vector4d t = params.weights.transpose() * feature;
  return decode_offsets(box, t);
}

}  // namespace eanet
