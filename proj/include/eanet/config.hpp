#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eanet/backbone.hpp"
#include "eanet/datasets.hpp"
#include "eanet/model.hpp"
#include "eanet/tracker.hpp"
#include "eanet/training.hpp"

namespace eanet {

/// Environment variable consulted for the default data root.
inline constexpr const char* kDataRootEnv = "EANET_DATA_ROOT";

/// Fully resolved settings of one command-line run.
struct RunConfig {
  std::string network_preset = "vgg-m";  // vgg-m | desk
  NetworkConfig network;
  TrainConfig train;
  TrackerConfig tracker;
  Variant variant = Variant::AggEsk;
  FusionMode plain_mode = FusionMode::Mean;  // combination used by variant=sum
  std::uint64_t seed = 0;
  std::filesystem::path data_root;
  DatasetKind dataset = DatasetKind::Rgbt234;
  std::filesystem::path pretrained;  // optional backbone archive for phase 1
  int synth_frames = 20;

  /// Seeds of the individual random streams, all derived from `seed`.
  std::uint64_t derived_seed(std::string_view tag) const;
  std::uint64_t model_seed() const { return derived_seed("model"); }
  std::uint64_t train_seed(std::string_view stage) const { return derived_seed("train/" + std::string(stage)); }
  std::uint64_t track_seed(std::string_view sequence) const { return derived_seed("track/" + std::string(sequence)); }

  /// "key = value" lines for every key, in registry order.
  std::string echo() const;
  /// FNV-1a over the echo with path keys removed, as 16 hex digits.
  std::string hash() const;
};

/// Every accepted key, in echo order.
const std::vector<std::string>& config_keys();

/// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
/// Throws ConfigError naming the line on malformed input.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text, const std::string& origin);

/// Resolves assignments over the defaults. `network.preset` is applied
/// before any other network.* key regardless of position; later assignments
/// win. Throws ConfigError on unknown keys or bad values.
RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& assignments);

/// Reads an optional config file, then applies "key=value" overrides. The data
/// root defaults to $EANET_DATA_ROOT when set.
RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace eanet
