#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eanet/checkpoint.hpp"
#include "eanet/datasets.hpp"
#include "eanet/model.hpp"

namespace eanet {

/// Gaussian spread used when drawing training boxes around the ground truth.
struct SamplingSpread {
  double sigma_xy = 0.1;
  double sigma_scale = 0.05;
};

struct TrainConfig {
  int epochs = 500;
  int iterations_per_epoch = 100;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int frames_per_batch = 8;
  int batch_positives = 32;
  int batch_negatives = 96;
  int negative_pool = 1024;  // candidates scored for hard-negative mining
  double positive_iou = 0.7;
  double negative_iou = 0.5;
  SamplingSpread positive_spread{0.1, 0.05};
  SamplingSpread negative_spread{1.0, 0.3};
  std::uint64_t seed = 0;
  std::string config_hash;  // copied into checkpoint metadata

  /// Throws ConfigError on non-positive counts or rates and inconsistent thresholds.
  void validate() const;
  std::size_t total_iterations() const {
    return static_cast<std::size_t>(epochs) * static_cast<std::size_t>(iterations_per_epoch);
  }
};

/// SGD with momentum and L2 weight decay. Velocities are keyed by parameter
/// name, so the same optimizer works for any bundle with a visit() method.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Updates every tensor whose learning rate is positive; others are left
  /// untouched (no decay, no velocity).
  template <class P>
  void step(P& params, const P& grads, const std::function<double(std::string_view)>& lr_for) {
    std::vector<const Tensor<float>*> g;
    grads.visit("", [&](const std::string&, const Tensor<float>& t) { g.push_back(&t); });
    std::size_t k = 0;
    params.visit("", [&](const std::string& name, Tensor<float>& p) {
      const Tensor<float>& d = *g.at(k++);
      const double lr = lr_for(name);
      if (lr <= 0) return;
      update(name, p, d, lr);
    });
  }

 private:
  void update(const std::string& name, Tensor<float>& p, const Tensor<float>& d, double lr);

  double momentum_;
  double weight_decay_;
  std::map<std::string, std::vector<float>> velocity_;
};

struct Minibatch {
  std::size_t domain = 0;
  std::vector<PatchPair> patches;  // positives first, then negatives
  std::vector<int> labels;
  std::vector<BoundingBox> boxes;
  std::vector<BoundingBox> ground_truth;  // per sample
  std::vector<std::size_t> frames;        // per sample
};

/// Scores one candidate patch; higher means more target-like.
using PatchScorer = std::function<double(const PatchPair&)>;

/// Draws `frames_per_batch` annotated frames (with replacement only when the
/// sequence has fewer), then positives with IoU >= positive_iou and a pool of
/// negatives with IoU <= negative_iou. When `scorer` is set and the pool is
/// larger than batch_negatives, the highest-scoring negatives are kept.
Minibatch make_minibatch(const Sequence& sequence, std::size_t domain, const NetworkConfig& network,
                         const TrainConfig& config, Rng& rng, const PatchScorer& scorer = {});

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_trace;  // mean minibatch loss per iteration
};

/// Called after every iteration with (iteration index, minibatch loss).
using TrainProgress = std::function<void(std::size_t, double)>;

/// Trains one attribute branch (all three levels) and the FC stack with the
/// backbone frozen. `initial` supplies the backbone; its FC6 bank is replaced
/// by one fresh block per sequence. Every sequence must carry one of the
/// attribute's evaluation tags.
TrainResult train_phase1(AttributeId attribute, std::span<const Sequence> data, ModelParams<float> initial,
                         const TrainConfig& config, const TrainProgress& progress = {});

/// Assembles the five phase-1 branches, freezes them, and trains the
/// aggregation modules plus freshly initialized FC layers on all data. The
/// stored checkpoint omits the FC6 bank.
TrainResult train_phase2(std::span<const Sequence> data, std::span<const Checkpoint> branch_checkpoints,
                         Variant variant, FusionMode plain_mode, const TrainConfig& config,
                         const TrainProgress& progress = {});

/// Positive-class logit of one patch pair in inference mode.
double score_patch(const ModelParams<float>& model, const FusionOptions& fusion, const PatchPair& patch,
                   std::size_t domain);

}  // namespace eanet
