#pragma once

#include <array>
#include <bitset>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eanet/fusion.hpp"
#include "eanet/geometry.hpp"
#include "eanet/image.hpp"

namespace eanet {

/// The twelve per-sequence challenge attributes used for evaluation breakdowns.
enum class EvalAttribute { BC = 0, CM, DEF, FM, HO, LI, LR, MB, NO, PO, SV, TC };

inline constexpr std::size_t kEvalAttributeCount = 12;
inline constexpr std::array<EvalAttribute, kEvalAttributeCount> kAllEvalAttributes{
    EvalAttribute::BC, EvalAttribute::CM, EvalAttribute::DEF, EvalAttribute::FM, EvalAttribute::HO, EvalAttribute::LI,
    EvalAttribute::LR, EvalAttribute::MB, EvalAttribute::NO, EvalAttribute::PO, EvalAttribute::SV, EvalAttribute::TC};

std::string_view eval_attribute_name(EvalAttribute a);
std::optional<EvalAttribute> parse_eval_attribute(std::string_view name);

using AttributeSet = std::bitset<kEvalAttributeCount>;

/// Evaluation attributes that mark a sequence as training data for a fusion branch.
std::vector<EvalAttribute> training_attribute_tags(AttributeId branch);

struct FramePair {
  Image rgb;
  Image tir;  // single-channel source replicated to three channels
  std::size_t index = 0;
};

enum class DatasetKind { Gtot, Rgbt234, Lasher };

std::string_view dataset_kind_name(DatasetKind kind);
std::optional<DatasetKind> parse_dataset_kind(std::string_view name);

/// One RGB-T video. Frames are either held in memory (synthetic data) or read
/// lazily from the image paths.
struct Sequence {
  std::string name;
  std::vector<FramePair> frames;
  std::vector<std::filesystem::path> rgb_paths;
  std::vector<std::filesystem::path> tir_paths;
  std::vector<std::optional<BoundingBox>> ground_truth;      // visible modality; nullopt = absent
  std::vector<std::optional<BoundingBox>> ground_truth_tir;  // empty when not provided
  AttributeSet attributes;

  std::size_t size() const { return ground_truth.size(); }
  bool has(EvalAttribute a) const { return attributes.test(static_cast<std::size_t>(a)); }
  void set(EvalAttribute a) { attributes.set(static_cast<std::size_t>(a)); }
  FramePair frame(std::size_t i) const;
};

/// Parses one annotation line ("x,y,w,h", whitespace or comma separated; an
/// 8-value polygon becomes its enclosing box). All-zero or non-finite boxes
/// are reported as absent. Throws DataError naming `where` on bad input.
std::optional<BoundingBox> parse_box_line(std::string_view line, const std::string& where);

/// Reads an annotation file; corner_format treats values as x1,y1,x2,y2.
std::vector<std::optional<BoundingBox>> read_annotations(const std::filesystem::path& file, bool corner_format = false);

std::vector<std::string> list_sequences(const std::filesystem::path& root, DatasetKind kind);
Sequence load_sequence(const std::filesystem::path& root, DatasetKind kind, const std::string& name);
std::vector<Sequence> load_dataset(const std::filesystem::path& root, DatasetKind kind);

/// Stable-order subset of sequences tagged with `attr`.
std::vector<Sequence> filter_by_attribute(std::span<const Sequence> sequences, EvalAttribute attr);

/// Motion and appearance script for a synthetic RGB-T sequence.
struct SynthSpec {
  std::string name = "synth";
  int width = 160;
  int height = 120;
  int frames = 20;
  BoundingBox start{40, 40, 28, 28};
  double dx = 0;          // pixels per frame
  double dy = 0;
  double scale_rate = 1;  // multiplicative size change per frame
  int occlusion_start = -1;
  int occlusion_length = 0;
  int illumination_start = -1;  // RGB dims to illumination_factor from this frame
  double illumination_factor = 0.4;
  int crossover_start = -1;     // TIR target matches background from this frame
  double noise = 2.0;           // per-pixel noise std
};

/// Renders a textured target on a structured background; the TIR channel
/// shows the target hot. Ground truth is exact by construction and pixel
/// values are integers in [0, 255].
Sequence synth_sequence(const SynthSpec& spec, std::uint64_t seed);

/// A small set of sequences covering every training attribute plus a clean one.
std::vector<SynthSpec> default_synthetic_suite(int frames = 20);

/// Writes a sequence in the RGBT234 layout (visible/, infrared/, visible.txt,
/// infrared.txt, attributes.txt) under root/name.
void write_sequence(const Sequence& sequence, const std::filesystem::path& root);

Image read_image(const std::filesystem::path& path, bool grayscale);
void write_image(const Image& image, const std::filesystem::path& path);

}  // namespace eanet
