#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "eanet/checkpoint.hpp"
#include "eanet/config.hpp"
#include "eanet/evaluation.hpp"

namespace eanet {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // bad arguments or configuration
inline constexpr int kExitData = 2;      // missing or malformed input data
inline constexpr int kExitInternal = 3;  // anything else

/// Fixed subfolders under --out.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path results() const { return root / "results"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path curves() const { return root / "curves"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }

  /// Creates `dir` and writes the resolved config next to its contents.
  void prepare(const std::filesystem::path& dir, const RunConfig& config) const;
};

/// Runs the tool with argv[1..]. Never throws; errors become exit codes with a
/// message on `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Loads every sequence under config.data_root. Throws ConfigError when no
/// root is configured.
std::vector<Sequence> load_run_data(const RunConfig& config);

/// Sequences eligible as training data for one fusion branch.
std::vector<Sequence> branch_training_set(std::span<const Sequence> data, AttributeId attribute);

/// Trains one phase-1 branch. Every branch starts from the same backbone.
TrainResult run_phase1(const RunConfig& config, AttributeId attribute, std::span<const Sequence> data, std::ostream& log);

/// Trains the second phase for config.variant from five phase-1 checkpoints.
TrainResult run_phase2(const RunConfig& config, std::span<const Sequence> data, std::span<const Checkpoint> branches,
                      std::ostream& log);

/// Tracks every sequence and writes <results_dir>/<sequence>.txt. Returns the
/// boxes in sequence order.
std::vector<std::vector<BoundingBox>> run_tracking(const RunConfig& config, const ModelParams<float>& model,
                                                   std::span<const Sequence> data,
                                                   const std::filesystem::path& results_dir, std::ostream& log);

struct AblationResult {
  EvalReport sum;      // aggregation removed
  EvalReport agg_esk;  // full model
  std::size_t sum_parameters = 0;
  std::size_t agg_esk_parameters = 0;
  std::string table;
};

/// Side-by-side PR/SR table with columns "Var-AggESK" and "Proposed Method".
std::string format_ablation_table(const EvalReport& sum, const EvalReport& agg_esk);

/// Tracks and evaluates both variants on the same data and seeds. Missing
/// checkpoints under <out>/checkpoints are trained first (phase-1 branches
/// are shared between the variants).
AblationResult run_ablation(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace eanet
