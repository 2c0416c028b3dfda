#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eanet/datasets.hpp"
#include "eanet/geometry.hpp"

namespace eanet {

struct EvalCurve {
  std::vector<double> thresholds;  // ascending
  std::vector<double> rates;       // in [0, 1]

  friend bool operator==(const EvalCurve&, const EvalCurve&) = default;
};

/// 0, 1, ..., 50 pixels.
std::vector<double> precision_thresholds();
/// 0, 0.05, ..., 1.0 (21 points).
std::vector<double> success_thresholds();

inline constexpr double kPrecisionThreshold = 20.0;

/// Per-frame errors for frames whose ground truth is present.
struct FrameErrors {
  std::vector<double> distances;  // center distance in pixels
  std::vector<double> overlaps;   // IoU

  std::size_t size() const { return distances.size(); }
  void append(const FrameErrors& other);
};

/// Throws std::invalid_argument when the lengths differ.
FrameErrors frame_errors(std::span<const BoundingBox> pred, std::span<const std::optional<BoundingBox>> gt);

/// rate(theta) = fraction of frames with center distance <= theta.
EvalCurve precision_curve(const FrameErrors& errors, const std::vector<double>& thresholds = precision_thresholds());
/// rate(tau) = fraction of frames with IoU > tau (strict).
EvalCurve success_curve(const FrameErrors& errors, const std::vector<double>& thresholds = success_thresholds());

/// Convenience forms over plain box lists (every frame annotated).
EvalCurve precision_curve(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt,
                          const std::vector<double>& thresholds = precision_thresholds());
EvalCurve success_curve(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt,
                        const std::vector<double>& thresholds = success_thresholds());

/// Fraction of frames within kPrecisionThreshold pixels.
double precision_score(const FrameErrors& errors);
/// Mean of the success curve over the 21-point grid (discrete AUC).
double success_score(const FrameErrors& errors);

struct ScoreRow {
  std::string label;
  std::size_t sequences = 0;
  std::size_t frames = 0;
  std::optional<double> pr;  // empty when no frame contributes
  std::optional<double> sr;
};

struct EvalReport {
  std::string tracker;
  std::vector<ScoreRow> per_sequence;
  std::vector<ScoreRow> per_attribute;  // one row per evaluation attribute, enum order
  ScoreRow all;                         // pooled over every frame of every sequence
  EvalCurve precision;                  // pooled curves of the ALL row
  EvalCurve success;
};

/// Frame-pooled scores overall and per attribute. `predictions[i]` belongs to
/// `sequences[i]` and must have the same length.
EvalReport evaluate(std::span<const Sequence> sequences, std::span<const std::vector<BoundingBox>> predictions,
                    const std::string& tracker);

/// Reads <results_dir>/<sequence>.txt for every sequence. Throws DataError
/// naming the sequence when a file is missing or has the wrong length.
EvalReport evaluate_directory(const std::filesystem::path& results_dir, std::span<const Sequence> sequences,
                              const std::string& tracker);

/// Fixed-width table: attribute rows then ALL, PR and SR to three decimals.
std::string format_report_table(const EvalReport& report);
/// CSV with header attribute,pr,sr,n_sequences,n_frames; "n/a" for empty rows.
std::string format_report_csv(const EvalReport& report);

enum class CurveFormat { Csv, Png };
std::optional<CurveFormat> parse_curve_format(std::string_view name);

/// One labeled curve series (a tracker) with its legend score.
struct CurveSeries {
  std::string name;
  double score = 0;
  EvalCurve curve;
};

/// Writes precision.{csv,png} and success.{csv,png} under out_dir, one series
/// per report, legends annotated with PR@20 / SR. Returns the written paths.
std::vector<std::filesystem::path> emit_curves(std::span<const EvalReport> reports, const std::filesystem::path& out_dir,
                                               CurveFormat format);

/// Parses a curve CSV written by emit_curves.
std::vector<CurveSeries> read_curve_csv(const std::filesystem::path& path);

}  // namespace eanet
