#pragma once

#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "eanet/datasets.hpp"
#include "eanet/model.hpp"
#include "eanet/training.hpp"

namespace eanet {

struct TrackerConfig {
  int candidates = 256;
  int top_k = 5;
  double success_threshold = 0.0;  // on the mean top-k positive logit

  int init_positives = 500;
  int init_negatives = 5000;
  double init_negative_iou = 0.5;
  int regression_samples = 1000;
  double regression_iou = 0.6;
  double regression_lambda = 10.0;

  int update_positives = 50;
  int update_negatives = 200;
  double positive_iou = 0.7;
  double update_negative_iou = 0.3;

  int long_interval = 10;  // frames between long-horizon updates
  int long_memory = 100;   // frames kept (long-horizon view)
  int short_memory = 20;   // most recent frames used by short updates

  int init_iterations = 50;
  int update_iterations = 15;
  double init_learning_rate = 5e-3;
  double update_learning_rate = 5e-3;
  double domain_lr_multiplier = 10.0;  // FC6 learns faster than FC4/FC5
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_positives = 32;
  int batch_negatives = 96;
  int negative_pool = 1024;

  SamplingSpread candidate_spread{0.3, 0.05};
  double failure_expansion = 2.0;  // candidate sigma_xy multiplier after a failed frame
  SamplingSpread positive_spread{0.1, 0.05};
  SamplingSpread negative_spread{1.0, 0.3};
  SamplingSpread regression_spread{0.3, 0.1};

  std::uint64_t seed = 0;

  /// Throws ConfigError when a count or interval is non-positive or top_k > candidates.
  void validate() const;
};

/// Cached head-input features collected on one frame.
struct MemoryFrame {
  std::size_t frame = 0;
  RowMatrix<float> positives;
  RowMatrix<float> negatives;
};

enum class UpdateKind { None, Short, Long };

struct TrackerState {
  TrackerConfig config;
  ModelParams<float> model;  // offline network; only model.head changes online
  RegressorParams regressor;
  // Oldest first, at most long_memory frames. Short updates read the last
  // short_memory entries, long updates read all of them.
  std::deque<MemoryFrame> memory;
  BoundingBox current_box;
  std::size_t t = 0;  // frames processed so far
  double last_score = 0;
  bool last_success = true;
  Rng rng;
  Sgd optimizer{0.9, 5e-4};
};

struct StepResult {
  BoundingBox box;
  double score = 0;
  bool success = false;
  std::vector<BoundingBox> candidates;
  std::vector<double> scores;
  std::size_t raw_argmax = 0;           // highest-scoring candidate
  std::vector<std::size_t> top_indices;  // descending score, ties to lower index
  UpdateKind update = UpdateKind::None;
};

/// Head-input features of `boxes` in one frame, one row per box.
RowMatrix<float> extract_box_features(const ModelParams<float>& model, const FramePair& frame,
                                      std::span<const BoundingBox> boxes);

/// Mean of boxes (component-wise over x, y, w, h).
BoundingBox mean_box(std::span<const BoundingBox> boxes);

/// Builds the tracker on the first frame. `model` is the offline network; its
/// FC4/FC5 are copied into an online head with a single fresh FC6 block.
/// Throws std::invalid_argument when gt is smaller than 2x2 px or outside the frame.
TrackerState tracker_init(const FramePair& frame, const BoundingBox& gt, const ModelParams<float>& model,
                          const TrackerConfig& config);

/// Locates the target in the next frame and runs any due model update.
StepResult tracker_step(TrackerState& state, const FramePair& frame);

/// Fine-tunes the online FC layers on the given memory view.
void tracker_update(TrackerState& state, UpdateKind kind);

/// Appends one frame of samples, evicting the oldest frames beyond long_memory.
void push_memory(TrackerState& state, MemoryFrame entry);

/// Tracks a whole sequence (OPE: initialized once on its first annotated frame).
/// Frames before that frame repeat the initial box.
std::vector<BoundingBox> track_sequence(const Sequence& sequence, const ModelParams<float>& model,
                                        const TrackerConfig& config);

/// One "x,y,w,h" line per frame with integer (rounded) values.
void write_results(const std::filesystem::path& path, std::span<const BoundingBox> boxes);
std::vector<BoundingBox> read_results(const std::filesystem::path& path);

}  // namespace eanet
