#include "eanet/tracker.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "eanet/errors.hpp"

namespace eanet {

void TrackerConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw ConfigError(std::string("tracker: ") + what + " must be positive");
  };
  positive(candidates, "candidates");
  positive(top_k, "top_k");
  positive(init_positives, "init_positives");
  positive(init_negatives, "init_negatives");
  positive(regression_samples, "regression_samples");
  positive(update_positives, "update_positives");
  positive(update_negatives, "update_negatives");
  positive(long_interval, "long_interval");
  positive(long_memory, "long_memory");
  positive(short_memory, "short_memory");
  positive(batch_positives, "batch_positives");
  positive(batch_negatives, "batch_negatives");
  positive(init_learning_rate, "init_learning_rate");
  positive(update_learning_rate, "update_learning_rate");
  positive(candidate_spread.sigma_xy, "candidate sigma_xy");
  positive(failure_expansion, "failure_expansion");
  if (init_iterations < 0 || update_iterations < 0) throw ConfigError("tracker: iteration counts must be >= 0");
  if (top_k > candidates) throw ConfigError("tracker: top_k must not exceed candidates");
  if (short_memory > long_memory) throw ConfigError("tracker: short_memory must not exceed long_memory");
  if (negative_pool < batch_negatives) throw ConfigError("tracker: negative_pool must be >= batch_negatives");
  if (regression_lambda < 0) throw ConfigError("tracker: regression_lambda must be >= 0");
}

RowMatrix<float> extract_box_features(const ModelParams<float>& model, const FramePair& frame,
                                      std::span<const BoundingBox> boxes) {
  const auto dim = static_cast<Eigen::Index>(model.config.feature_dim());
  RowMatrix<float> out(static_cast<Eigen::Index>(boxes.size()), dim);
  const FusionOptions fusion = model.inference_fusion();
  const auto n = static_cast<std::ptrdiff_t>(boxes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const PatchPair p = extract_patch_pair(frame, boxes[static_cast<std::size_t>(i)], model.config);
    const Tensor<float> f = extract_features(p.rgb, p.tir, model, fusion);
    std::copy_n(f.data(), f.size(), out.row(i).data());
  }
  return out;
}

BoundingBox mean_box(std::span<const BoundingBox> boxes) {
  if (boxes.empty()) throw std::invalid_argument("mean_box: no boxes");
  BoundingBox m{0, 0, 0, 0};
  for (const auto& b : boxes) {
    m.x += b.x;
    m.y += b.y;
    m.w += b.w;
    m.h += b.h;
  }
  const double n = static_cast<double>(boxes.size());
  return {m.x / n, m.y / n, m.w / n, m.h / n};
}

namespace {

std::vector<double> positive_scores(const HeadParams<float>& head, const RowMatrix<float>& features) {
  const RowMatrix<float> logits = head_forward(features, head, 0);
  std::vector<double> s(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) s[static_cast<std::size_t>(i)] = logits(i, kPositiveColumn);
  return s;
}

RowMatrix<float> stack_rows(const std::vector<const RowMatrix<float>*>& parts, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto* p : parts) rows += p->rows();
  RowMatrix<float> out(rows, cols);
  Eigen::Index r = 0;
  for (const auto* p : parts) {
    if (p->rows() == 0) continue;
    out.middleRows(r, p->rows()) = *p;
    r += p->rows();
  }
  return out;
}

RowMatrix<float> select_rows(const RowMatrix<float>& m, std::span<const std::size_t> rows) {
  RowMatrix<float> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// Endless shuffled index stream over [0, n), reshuffled after each pass.
class IndexStream {
 public:
  IndexStream(std::size_t n, Rng& rng) : order_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> take(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

void fine_tune(TrackerState& s, Sgd& optimizer, const RowMatrix<float>& pos, const RowMatrix<float>& neg,
               int iterations, double lr) {
  if (pos.rows() == 0 || neg.rows() == 0) return;
  const auto& cfg = s.config;
  HeadParams<float>& head = s.model.head;
  IndexStream pos_stream(static_cast<std::size_t>(pos.rows()), s.rng);
  IndexStream neg_stream(static_cast<std::size_t>(neg.rows()), s.rng);
  const auto n_pos = static_cast<std::size_t>(cfg.batch_positives);
  const auto n_neg = static_cast<std::size_t>(cfg.batch_negatives);
  const auto pool = static_cast<std::size_t>(cfg.negative_pool);
  HeadParams<float> grads = zeros_like_params(head);
  HeadCache<float> cache;
  for (int it = 0; it < iterations; ++it) {
    const RowMatrix<float> p = select_rows(pos, pos_stream.take(n_pos));
    RowMatrix<float> n = select_rows(neg, neg_stream.take(pool));
    if (pool > n_neg) n = select_rows(n, hard_negative_mining(positive_scores(head, n), n_neg));
    const RowMatrix<float> batch = stack_rows({&p, &n}, pos.cols());
    std::vector<int> labels(static_cast<std::size_t>(batch.rows()), 0);
    std::fill_n(labels.begin(), p.rows(), 1);

    grads.visit("", [](const std::string&, Tensor<float>& t) { t.fill(0.0f); });
    const RowMatrix<float> logits = head_forward(batch, head, 0, &s.rng, &cache);
    RowMatrix<float> d_logits;
    bce_loss(logits, labels, &d_logits);
    head_backward(cache, head, d_logits, &grads);
    optimizer.step(head, grads, [&](std::string_view name) {
      return name.find("fc6") != std::string_view::npos ? lr * cfg.domain_lr_multiplier : lr;
    });
  }
}

Eigen::MatrixXd with_bias(const RowMatrix<float>& f) {
  Eigen::MatrixXd out(f.rows(), f.cols() + 1);
  out.leftCols(f.cols()) = f.cast<double>();
  out.col(f.cols()).setOnes();
  return out;
}

ImageSize frame_bounds(const FramePair& frame) { return {frame.rgb.width, frame.rgb.height}; }

SampleSpec spec_of(const SamplingSpread& s, std::size_t n, std::uint64_t seed) {
  return {n, s.sigma_xy, s.sigma_scale, seed};
}

// Gathers positives and negatives from memory frames [first, end).
std::pair<RowMatrix<float>, RowMatrix<float>> gather(const TrackerState& s, std::size_t first) {
  std::vector<const RowMatrix<float>*> pos, neg;
  for (std::size_t i = first; i < s.memory.size(); ++i) {
    pos.push_back(&s.memory[i].positives);
    neg.push_back(&s.memory[i].negatives);
  }
  const auto cols = static_cast<Eigen::Index>(s.model.config.feature_dim());
  return {stack_rows(pos, cols), stack_rows(neg, cols)};
}

}  // namespace

void push_memory(TrackerState& state, MemoryFrame entry) {
  state.memory.push_back(std::move(entry));
  while (state.memory.size() > static_cast<std::size_t>(state.config.long_memory)) state.memory.pop_front();
}

void tracker_update(TrackerState& state, UpdateKind kind) {
  if (kind == UpdateKind::None || state.memory.empty()) return;
  const std::size_t horizon = kind == UpdateKind::Short ? static_cast<std::size_t>(state.config.short_memory)
                                                        : static_cast<std::size_t>(state.config.long_memory);
  const std::size_t first = state.memory.size() > horizon ? state.memory.size() - horizon : 0;
  const auto [pos, neg] = gather(state, first);
  fine_tune(state, state.optimizer, pos, neg, state.config.update_iterations, state.config.update_learning_rate);
}

TrackerState tracker_init(const FramePair& frame, const BoundingBox& gt, const ModelParams<float>& model,
                          const TrackerConfig& config) {
  config.validate();
  if (!(gt.w >= 2 && gt.h >= 2)) throw std::invalid_argument("tracker_init: ground-truth box is smaller than 2x2 px");
  const ImageSize bounds = frame_bounds(frame);
  if (!(gt.x < bounds.width && gt.y < bounds.height && gt.right() > 0 && gt.bottom() > 0)) {
    throw std::invalid_argument("tracker_init: ground-truth box lies outside the frame");
  }

  TrackerState s;
  s.config = config;
  s.model = model;
  s.rng = Rng(config.seed);
  s.optimizer = Sgd(config.momentum, config.weight_decay);
  s.current_box = clip_to_image(gt, bounds);
  Rng init_rng(s.rng());
  s.model.head.fc6.clear();
  s.model.head.fc6.push_back(HeadParams<float>::make_domain(s.model.head.fc5.out_features(), init_rng));

  const auto pos_boxes = sample_by_iou(s.current_box, static_cast<std::size_t>(config.init_positives),
                                       config.positive_iou, 1.0, spec_of(config.positive_spread, 0, s.rng()), bounds);
  const auto neg_boxes = sample_by_iou(s.current_box, static_cast<std::size_t>(config.init_negatives), 0.0,
                                       config.init_negative_iou, spec_of(config.negative_spread, 0, s.rng()), bounds);
  const RowMatrix<float> pos = extract_box_features(s.model, frame, pos_boxes);
  const RowMatrix<float> neg = extract_box_features(s.model, frame, neg_boxes);
  Sgd init_optimizer(config.momentum, config.weight_decay);
  fine_tune(s, init_optimizer, pos, neg, config.init_iterations, config.init_learning_rate);

  const auto reg_boxes = sample_by_iou(s.current_box, static_cast<std::size_t>(config.regression_samples),
                                       config.regression_iou, 1.0, spec_of(config.regression_spread, 0, s.rng()), bounds);
  const std::vector<BoundingBox> targets(reg_boxes.size(), s.current_box);
  s.regressor = regressor_fit(with_bias(extract_box_features(s.model, frame, reg_boxes)), reg_boxes, targets,
                              config.regression_lambda);

  MemoryFrame first;
  first.frame = 0;
  first.positives = pos;
  first.negatives = neg.topRows(std::min<Eigen::Index>(neg.rows(), config.update_negatives));
  push_memory(s, std::move(first));
  s.t = 1;
  s.last_score = positive_scores(s.model.head, extract_box_features(s.model, frame, std::span(&s.current_box, 1)))[0];
  s.last_success = true;
  return s;
}

StepResult tracker_step(TrackerState& s, const FramePair& frame) {
  const auto& cfg = s.config;
  const ImageSize bounds = frame_bounds(frame);
  SamplingSpread spread = cfg.candidate_spread;
  if (!s.last_success) spread.sigma_xy *= cfg.failure_expansion;

  StepResult r;
  r.candidates = gaussian_sample(s.current_box, spec_of(spread, static_cast<std::size_t>(cfg.candidates), s.rng()), bounds);
  const RowMatrix<float> feats = extract_box_features(s.model, frame, r.candidates);
  r.scores = positive_scores(s.model.head, feats);
  r.raw_argmax = static_cast<std::size_t>(std::distance(r.scores.begin(), std::max_element(r.scores.begin(), r.scores.end())));
  r.top_indices = hard_negative_mining(r.scores, static_cast<std::size_t>(cfg.top_k));

  std::vector<BoundingBox> top;
  double score = 0;
  for (std::size_t i : r.top_indices) {
    top.push_back(r.candidates[i]);
    score += r.scores[i];
  }
  r.score = score / static_cast<double>(top.size());
  r.success = r.score > cfg.success_threshold;

  if (r.success) {
    std::vector<BoundingBox> refined;
    for (std::size_t i : r.top_indices) {
      const Eigen::VectorXd f = with_bias(feats.row(static_cast<Eigen::Index>(i))).row(0).transpose();
      refined.push_back(regressor_apply(s.regressor, f, r.candidates[i]));
    }
    r.box = clip_to_image(mean_box(refined), bounds);
  } else {
    r.box = mean_box(top);
  }

  const std::size_t frame_index = s.t;
  if (r.success) {
    MemoryFrame m;
    m.frame = frame_index;
    const auto pos_boxes = sample_by_iou(r.box, static_cast<std::size_t>(cfg.update_positives), cfg.positive_iou, 1.0,
                                         spec_of(cfg.positive_spread, 0, s.rng()), bounds);
    const auto neg_boxes = sample_by_iou(r.box, static_cast<std::size_t>(cfg.update_negatives), 0.0,
                                         cfg.update_negative_iou, spec_of(cfg.negative_spread, 0, s.rng()), bounds);
    m.positives = extract_box_features(s.model, frame, pos_boxes);
    m.negatives = extract_box_features(s.model, frame, neg_boxes);
    push_memory(s, std::move(m));
  }

  if (!r.success) {
    r.update = UpdateKind::Short;
  } else if (frame_index % static_cast<std::size_t>(cfg.long_interval) == 0) {
    r.update = UpdateKind::Long;
  }
  tracker_update(s, r.update);

  s.current_box = r.box;
  s.last_score = r.score;
  s.last_success = r.success;
  ++s.t;
  return r;
}

std::vector<BoundingBox> track_sequence(const Sequence& sequence, const ModelParams<float>& model,
                                        const TrackerConfig& config) {
  std::size_t first = 0;
  while (first < sequence.size() && !sequence.ground_truth[first]) ++first;
  if (first == sequence.size()) throw DataError("sequence " + sequence.name + " has no annotated frame to start from");
  const BoundingBox init_box = *sequence.ground_truth[first];
  std::vector<BoundingBox> out(first, init_box);
  TrackerState state = tracker_init(sequence.frame(first), init_box, model, config);
  out.push_back(state.current_box);
  for (std::size_t i = first + 1; i < sequence.size(); ++i) out.push_back(tracker_step(state, sequence.frame(i)).box);
  return out;
}

void write_results(const std::filesystem::path& path, std::span<const BoundingBox> boxes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& b : boxes) {
    out << std::lround(b.x) << ',' << std::lround(b.y) << ',' << std::lround(b.w) << ',' << std::lround(b.h) << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<BoundingBox> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing result file " + path.string());
  std::vector<BoundingBox> boxes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    double v[4];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 4; ++k) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == ',')) ++p;
      const auto res = std::from_chars(p, end, v[k]);
      if (res.ec != std::errc()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 4 numbers");
      }
      p = res.ptr;
    }
    while (p < end && (*p == ' ' || *p == '\t' || *p == ',')) ++p;
    if (p != end) throw DataError(path.string() + ":" + std::to_string(line_no) + ": trailing characters");
    boxes.push_back({v[0], v[1], v[2], v[3]});
  }
  return boxes;
}

}  // namespace eanet
