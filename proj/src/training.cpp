#include "eanet/training.hpp"

#include <algorithm>
#include <numeric>

#include "eanet/errors.hpp"

namespace eanet {

void TrainConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw ConfigError(std::string("training: ") + what + " must be positive");
  };
  positive(epochs, "epochs");
  positive(iterations_per_epoch, "iterations_per_epoch");
  positive(learning_rate, "learning_rate");
  positive(frames_per_batch, "frames_per_batch");
  positive(batch_positives, "batch_positives");
  positive(batch_negatives, "batch_negatives");
  positive(positive_spread.sigma_xy, "positive sigma_xy");
  positive(negative_spread.sigma_xy, "negative sigma_xy");
  if (momentum < 0 || momentum >= 1) throw ConfigError("training: momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("training: weight_decay must be non-negative");
  if (negative_pool < batch_negatives) throw ConfigError("training: negative_pool must be >= batch_negatives");
  if (!(negative_iou < positive_iou) || negative_iou < 0 || positive_iou > 1) {
    throw ConfigError("training: need 0 <= negative_iou < positive_iou <= 1");
  }
}

void Sgd::update(const std::string& name, Tensor<float>& p, const Tensor<float>& d, double lr) {
  p.check_same(d, "sgd");
  auto& v = velocity_[name];
  if (v.size() != p.size()) v.assign(p.size(), 0.0f);
  const auto mu = static_cast<float>(momentum_);
  const auto wd = static_cast<float>(weight_decay_);
  const auto rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = mu * v[i] + d[i] + wd * p[i];
    p[i] -= rate * v[i];
  }
}

namespace {

// Splits `total` into `parts` near-equal shares, larger shares first.
std::vector<std::size_t> split_evenly(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> out(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++out[i];
  return out;
}

}  // namespace

Minibatch make_minibatch(const Sequence& sequence, std::size_t domain, const NetworkConfig& network,
                         const TrainConfig& config, Rng& rng, const PatchScorer& scorer) {
  std::vector<std::size_t> annotated;
  for (std::size_t i = 0; i < sequence.size(); ++i)
    if (sequence.ground_truth[i]) annotated.push_back(i);
  if (annotated.empty()) throw DataError("sequence " + sequence.name + " has no annotated frames");

  const auto n_frames = static_cast<std::size_t>(config.frames_per_batch);
  std::vector<std::size_t> frames;
  if (annotated.size() >= n_frames) {
    std::shuffle(annotated.begin(), annotated.end(), rng);
    frames.assign(annotated.begin(), annotated.begin() + static_cast<std::ptrdiff_t>(n_frames));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, annotated.size() - 1);
    for (std::size_t i = 0; i < n_frames; ++i) frames.push_back(annotated[pick(rng)]);
  }

  const auto pos_share = split_evenly(static_cast<std::size_t>(config.batch_positives), n_frames);
  const auto pool_share = split_evenly(static_cast<std::size_t>(config.negative_pool), n_frames);

  struct Candidate {
    std::size_t slot;  // index into `frames`
    BoundingBox box;
  };
  std::vector<Candidate> positives, pool;
  for (std::size_t s = 0; s < frames.size(); ++s) {
    const std::size_t f = frames[s];
    const BoundingBox gt = *sequence.ground_truth[f];
    const FramePair probe = sequence.frame(f);
    const ImageSize bounds{probe.rgb.width, probe.rgb.height};
    const SampleSpec pos_spec{0, config.positive_spread.sigma_xy, config.positive_spread.sigma_scale, rng()};
    for (const auto& b : sample_by_iou(gt, pos_share[s], config.positive_iou, 1.0, pos_spec, bounds))
      positives.push_back({s, b});
    const SampleSpec neg_spec{0, config.negative_spread.sigma_xy, config.negative_spread.sigma_scale, rng()};
    for (const auto& b : sample_by_iou(gt, pool_share[s], 0.0, config.negative_iou, neg_spec, bounds))
      pool.push_back({s, b});
  }

  // Frames are decoded once per batch; lazily loaded sequences read from disk here.
  std::vector<FramePair> loaded;
  loaded.reserve(frames.size());
  for (std::size_t f : frames) loaded.push_back(sequence.frame(f));

  const auto k = static_cast<std::size_t>(config.batch_negatives);
  std::vector<std::size_t> chosen(k);
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  if (scorer && pool.size() > k) {
    std::vector<double> scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
      scores[i] = scorer(extract_patch_pair(loaded[pool[i].slot], pool[i].box, network));
    chosen = hard_negative_mining(scores, k);
  }

  Minibatch batch;
  batch.domain = domain;
  auto add = [&](const Candidate& c, int label) {
    batch.patches.push_back(extract_patch_pair(loaded[c.slot], c.box, network));
    batch.labels.push_back(label);
    batch.boxes.push_back(c.box);
    batch.ground_truth.push_back(*sequence.ground_truth[frames[c.slot]]);
    batch.frames.push_back(frames[c.slot]);
  };
  for (const auto& c : positives) add(c, 1);
  for (std::size_t i : chosen) add(pool[i], 0);
  return batch;
}

double score_patch(const ModelParams<float>& model, const FusionOptions& fusion, const PatchPair& patch,
                   std::size_t domain) {
  const Tensor<float> feat = extract_features(patch.rgb, patch.tir, model, fusion);
  const RowMatrix<float> row = Eigen::Map<const RowMatrix<float>>(feat.data(), 1, static_cast<Eigen::Index>(feat.size()));
  const RowMatrix<float> logits = head_forward(row, model.head, domain);
  return static_cast<double>(logits(0, kPositiveColumn));
}

namespace {

struct LoopSetup {
  FusionOptions fusion;
  GradientScope scope;
  std::function<bool(std::string_view)> trainable;  // excluding FC6 blocks
};

// Runs the shared iteration loop and returns the per-iteration loss trace.
std::vector<double> run_training(ModelParams<float>& model, std::span<const Sequence> data, const LoopSetup& setup,
                                 const TrainConfig& config, Rng& rng, const TrainProgress& progress) {
  Rng sample_rng(rng());
  Rng dropout_rng(rng());
  Sgd sgd(config.momentum, config.weight_decay);
  ModelParams<float> grads = zeros_like_params(model);
  std::vector<double> trace;
  const std::size_t total = config.total_iterations();
  trace.reserve(total);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t it = 0; it < total; ++it) {
    const std::size_t pos = it % data.size();
    if (pos == 0) std::shuffle(order.begin(), order.end(), sample_rng);
    const std::size_t domain = order[pos];

    const PatchScorer scorer = [&](const PatchPair& p) { return score_patch(model, setup.fusion, p, domain); };
    const Minibatch batch = make_minibatch(data[domain], domain, model.config, config, sample_rng, scorer);

    grads.visit("", [](const std::string&, Tensor<float>& t) { t.fill(0.0f); });
    // Rows of the batch loss are independent, so each sample runs forward and
    // backward on its own and only one activation cache is alive at a time.
    const double inv_batch = 1.0 / static_cast<double>(batch.patches.size());
    double loss = 0;
    ForwardCache<float> cache;
    HeadCache<float> head_cache;
    for (std::size_t i = 0; i < batch.patches.size(); ++i) {
      const PatchPair& p = batch.patches[i];
      const Tensor<float> feat = extract_features(p.rgb, p.tir, model, setup.fusion, &cache);
      const RowMatrix<float> row =
          Eigen::Map<const RowMatrix<float>>(feat.data(), 1, static_cast<Eigen::Index>(feat.size()));
      const RowMatrix<float> logits = head_forward(row, model.head, domain, &dropout_rng, &head_cache);
      RowMatrix<float> d_logits;
      const int label = batch.labels[i];
      loss += bce_loss(logits, std::span<const int>(&label, 1), &d_logits) * inv_batch;
      d_logits *= static_cast<float>(inv_batch);
      const RowMatrix<float> d_row = head_backward(head_cache, model.head, d_logits, &grads.head);
      Tensor<float> d_feat({feat.size()});
      std::copy_n(d_row.data(), feat.size(), d_feat.data());
      backward_features(cache, model, setup.fusion, d_feat, setup.scope, &grads);
    }

    const std::string own_fc6 = "head.fc6." + std::to_string(domain) + ".";
    sgd.step(model, grads, [&](std::string_view name) {
      if (name.starts_with("head.fc6.")) return name.starts_with(own_fc6) ? config.learning_rate : 0.0;
      return setup.trainable(name) ? config.learning_rate : 0.0;
    });
    trace.push_back(loss);
    if (progress) progress(it, loss);
  }
  return trace;
}

void reset_domains(ModelParams<float>& model, std::size_t domains, Rng& rng) {
  model.head.fc6.clear();
  for (std::size_t d = 0; d < domains; ++d)
    model.head.fc6.push_back(HeadParams<float>::make_domain(static_cast<std::size_t>(model.config.fc_width), rng));
}

}  // namespace

TrainResult train_phase1(AttributeId attribute, std::span<const Sequence> data, ModelParams<float> initial,
                         const TrainConfig& config, const TrainProgress& progress) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train_phase1: no training sequences");
  const auto tags = training_attribute_tags(attribute);
  for (const auto& s : data) {
    const bool tagged = std::any_of(tags.begin(), tags.end(), [&](EvalAttribute a) { return s.has(a); });
    if (!tagged) {
      throw std::invalid_argument("train_phase1: sequence " + s.name + " is not tagged for branch " +
                                  std::string(attribute_name(attribute)));
    }
  }

  Rng rng(config.seed);
  reset_domains(initial, data.size(), rng);
  const std::string branch = ".branch." + std::string(attribute_name(attribute)) + ".";
  LoopSetup setup;
  setup.fusion = {FusionMode::SingleBranch, attribute};
  setup.scope = GradientScope{false, true, false, false};
  setup.trainable = [branch](std::string_view name) {
    return name.starts_with("head.") || (name.starts_with("fusion.") && name.find(branch) != std::string_view::npos);
  };

  TrainResult result;
  result.loss_trace = run_training(initial, data, setup, config, rng, progress);
  result.checkpoint.model = std::move(initial);
  result.checkpoint.phase = 1;
  result.checkpoint.epoch = config.epochs;
  result.checkpoint.seed = config.seed;
  result.checkpoint.config_hash = config.config_hash;
  result.checkpoint.attribute = std::string(attribute_name(attribute));
  result.checkpoint.trained_domains = data.size();
  result.checkpoint.store_domain_layers = true;
  return result;
}

TrainResult train_phase2(std::span<const Sequence> data, std::span<const Checkpoint> branch_checkpoints,
                         Variant variant, FusionMode plain_mode, const TrainConfig& config,
                         const TrainProgress& progress) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train_phase2: no training sequences");
  if (plain_mode != FusionMode::Mean && plain_mode != FusionMode::Sum) {
    throw std::invalid_argument("train_phase2: plain combination must be mean or sum");
  }
  std::array<const Checkpoint*, kAttributeCount> by_attribute{};
  for (const auto& ck : branch_checkpoints) {
    const auto a = parse_attribute(ck.attribute);
    if (ck.phase != 1 || !a) throw std::invalid_argument("train_phase2: checkpoint is not a phase-1 branch checkpoint");
    by_attribute[static_cast<std::size_t>(*a)] = &ck;
  }
  for (auto a : kAllAttributes) {
    if (!by_attribute[static_cast<std::size_t>(a)]) {
      throw std::invalid_argument("train_phase2: missing branch checkpoint for " + std::string(attribute_name(a)));
    }
  }
  const NetworkConfig& network = by_attribute[0]->model.config;
  for (const auto* ck : by_attribute) {
    if (!(ck->model.config == network)) throw std::invalid_argument("train_phase2: branch checkpoints disagree on network shape");
  }

  Rng rng(config.seed);
  ModelParams<float> model = ModelParams<float>::init(network, variant, data.size(), rng());
  model.plain_mode = plain_mode;
  model.backbone = by_attribute[0]->model.backbone;
  for (auto a : kAllAttributes) {
    const auto& src = by_attribute[static_cast<std::size_t>(a)]->model;
    for (int l = 0; l < 3; ++l) model.fusion[l].branch(a) = src.fusion[l].branch(a);
  }

  LoopSetup setup;
  setup.fusion = model.inference_fusion();
  setup.scope = GradientScope{false, false, true, false};
  setup.trainable = [](std::string_view name) {
    return name.starts_with("head.") || name.find(".aggregation.") != std::string_view::npos;
  };

  TrainResult result;
  result.loss_trace = run_training(model, data, setup, config, rng, progress);
  result.checkpoint.model = std::move(model);
  result.checkpoint.phase = 2;
  result.checkpoint.epoch = config.epochs;
  result.checkpoint.seed = config.seed;
  result.checkpoint.config_hash = config.config_hash;
  result.checkpoint.trained_domains = data.size();
  result.checkpoint.store_domain_layers = false;
  return result;
}

}  // namespace eanet
