#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eanet/model.hpp"

namespace eanet {

/// Named float32 arrays plus a plain-text metadata header.
///
/// File layout:
///   EANET-CHECKPOINT 1\n
///   key=value\n ...           (sorted by key)
///   \n                        (blank line ends the header)
///   u32 array count, then per array:
///     u32 name length, name bytes, u32 rank, u64 dims[rank], f32 data[prod(dims)]
/// All integers and floats are little-endian.
struct ArrayArchive {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor<float>>> arrays;  // in write order

  const Tensor<float>* find(const std::string& name) const;
  void save(const std::filesystem::path& path) const;
  static ArrayArchive load(const std::filesystem::path& path);
};

/// A model plus its training provenance.
struct Checkpoint {
  ModelParams<float> model;
  int phase = 0;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string attribute;                  // phase-1 branch attribute, empty otherwise
  std::size_t trained_domains = 0;        // FC6 blocks used during training
  bool store_domain_layers = true;        // false drops the FC6 bank from the file

  std::size_t parameter_count() const;    // parameters that are written to the file
};

/// Metadata keys written by save_checkpoint.
const std::vector<std::string>& checkpoint_metadata_keys();

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads backbone weights from an archive. Arrays named
/// "backbone.<rgb|tir>.conv<k>.<weight|bias>" set one stream; arrays named
/// "backbone.conv<k>.<weight|bias>" set both. Returns the number of arrays applied.
std::size_t load_pretrained_backbone(const std::filesystem::path& path, ModelParams<float>& model);

}  // namespace eanet
