#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

namespace eanet {

/// Axis-aligned box in pixels, anchored at its top-left corner.
struct BoundingBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double center_x() const { return x + w / 2; }
  double center_y() const { return y + h / 2; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  bool valid() const;

  static BoundingBox from_center(double cx, double cy, double w, double h) {
    return {cx - w / 2, cy - h / 2, w, h};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Gaussian candidate parameters. Translation std is sigma_xy times the box
/// extent on each axis; scale is log-normal with std sigma_scale.
struct SampleSpec {
  std::size_t n = 0;
  double sigma_xy = 0.1;
  double sigma_scale = 0.05;
  std::uint64_t seed = 0;
};

double iou(const BoundingBox& a, const BoundingBox& b);
double center_distance(const BoundingBox& a, const BoundingBox& b);

/// Forces a box inside [0,W]x[0,H], shrinking it first if it is larger than the image.
BoundingBox clip_to_image(const BoundingBox& box, ImageSize bounds);

std::vector<BoundingBox> gaussian_sample(const BoundingBox& center, const SampleSpec& spec,
                                         ImageSize bounds);

/// Rejection-samples `n` boxes with iou_lo <= IoU(box, gt) <= iou_hi from the
/// Gaussian described by `spec` (spec.n is ignored). Gives up after 100 * n
/// draws with SamplingBudgetExhausted.
std::vector<BoundingBox> sample_by_iou(const BoundingBox& gt, std::size_t n, double iou_lo,
                                       double iou_hi, const SampleSpec& spec, ImageSize bounds);

/// Box regression offsets relative to `box`: (dx/w, dy/h, log(wg/w), log(hg/h))
/// with dx, dy measured between centers.
Eigen::Vector4d encode_offsets(const BoundingBox& box, const BoundingBox& gt);
BoundingBox decode_offsets(const BoundingBox& box, const Eigen::Vector4d& offsets);

struct RegressorParams {
  Eigen::MatrixXd weights;  // [feature_dim x 4]
  double ridge_lambda = 0;

  Eigen::Index feature_dim() const { return weights.rows(); }
};

/// Closed-form ridge regression from features to box offsets. Throws
/// std::runtime_error when the normal matrix is singular.
RegressorParams regressor_fit(const Eigen::MatrixXd& features, std::span<const BoundingBox> boxes,
                              std::span<const BoundingBox> gts, double lambda);

BoundingBox regressor_apply(const RegressorParams& params, const Eigen::VectorXd& feature,
                            const BoundingBox& box);

}  // namespace eanet
