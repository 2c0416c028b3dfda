#include "eanet/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "eanet/errors.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace eanet {

namespace {

constexpr const char* kMagic = "EANET-CHECKPOINT 1";

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::string& where) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(U))) throw DataError(where + ": truncated file");
  return v;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw DataError("checkpoint: bad value for " + key);
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw DataError("checkpoint: bad value for " + key);
  return v;
}

const std::string& require(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw DataError("checkpoint: missing metadata key " + key);
  return it->second;
}

}  // namespace

const Tensor<float>* ArrayArchive::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

void ArrayArchive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kMagic << '\n';
  for (const auto& [k, v] : metadata) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata must not contain '=' in keys or newlines");
    }
    out << k << '=' << v << '\n';
  }
  out << '\n';
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

ArrayArchive ArrayArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw DataError(where + ": not a checkpoint file");
  ArrayArchive a;
  while (true) {
    if (!std::getline(in, line)) throw DataError(where + ": unterminated header");
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(where + ": malformed header line '" + line + "'");
    a.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = get<std::uint32_t>(in, where);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, where);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError(where + ": truncated array name");
    const auto rank = get<std::uint32_t>(in, where);
    if (rank > 8) throw DataError(where + ": implausible rank for " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, where));
    Tensor<float> t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw DataError(where + ": truncated data for " + name);
    }
    a.arrays.emplace_back(std::move(name), std::move(t));
  }
  return a;
}

std::size_t Checkpoint::parameter_count() const {
  std::size_t n = 0;
  model.visit("", [&](const std::string& name, const Tensor<float>& t) {
    if (!store_domain_layers && name.starts_with("head.fc6.")) return;
    n += t.size();
  });
  return n;
}

const std::vector<std::string>& checkpoint_metadata_keys() {
  static const std::vector<std::string> keys{
      "attribute",   "channels",       "config_hash",   "dropout",     "epoch",       "esk_min_width",
      "esk_reduction", "esk_spatial_kernel", "fc6_stored_domains", "fc6_trained_domains", "fc_width",
      "fusion_mode", "in_channels",    "input_mean",    "input_scale",   "lrn_alpha",   "lrn_beta",    "lrn_k",
      "lrn_size",    "patch_size",     "phase",         "pool_stride", "pool_window", "seed",
      "variant"};
  return keys;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto& m = ck.model;
  const auto& c = m.config;
  ArrayArchive a;
  auto& meta = a.metadata;
  meta["attribute"] = ck.attribute;
  meta["channels"] = std::to_string(c.channels[0]) + "," + std::to_string(c.channels[1]) + "," +
                     std::to_string(c.channels[2]);
  meta["config_hash"] = ck.config_hash;
  meta["dropout"] = fmt_double(c.dropout);
  meta["epoch"] = std::to_string(ck.epoch);
  meta["esk_min_width"] = std::to_string(c.esk.min_width);
  meta["esk_reduction"] = std::to_string(c.esk.reduction);
  meta["esk_spatial_kernel"] = std::to_string(c.esk.spatial_kernel);
  meta["fc6_stored_domains"] = std::to_string(ck.store_domain_layers ? m.head.domains() : 0);
  meta["fc6_trained_domains"] = std::to_string(ck.trained_domains);
  meta["fc_width"] = std::to_string(c.fc_width);
  meta["fusion_mode"] = m.plain_mode == FusionMode::Sum ? "sum" : "mean";
  meta["in_channels"] = std::to_string(c.in_channels);
  meta["input_mean"] = fmt_double(c.input_mean);
  meta["input_scale"] = fmt_double(c.input_scale);
  meta["lrn_alpha"] = fmt_double(c.lrn.alpha);
  meta["lrn_beta"] = fmt_double(c.lrn.beta);
  meta["lrn_k"] = fmt_double(c.lrn.k);
  meta["lrn_size"] = std::to_string(c.lrn.size);
  meta["patch_size"] = std::to_string(c.patch_size);
  meta["phase"] = std::to_string(ck.phase);
  meta["pool_stride"] = std::to_string(c.pool_stride);
  meta["pool_window"] = std::to_string(c.pool_window);
  meta["seed"] = std::to_string(ck.seed);
  meta["variant"] = std::string(variant_name(m.variant()));
  m.visit("", [&](const std::string& name, const Tensor<float>& t) {
    if (!ck.store_domain_layers && name.starts_with("head.fc6.")) return;
    a.arrays.emplace_back(name, t);
  });
  a.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const ArrayArchive a = ArrayArchive::load(path);
  const auto& meta = a.metadata;
  NetworkConfig c;
  {
    const std::string& ch = require(meta, "channels");
    std::stringstream ss(ch);
    std::string tok;
    for (int i = 0; i < 3; ++i) {
      if (!std::getline(ss, tok, ',')) throw DataError("checkpoint: bad channels '" + ch + "'");
      c.channels[i] = static_cast<int>(parse_int(tok, "channels"));
    }
  }
  c.dropout = parse_double(require(meta, "dropout"), "dropout");
  c.esk.min_width = static_cast<int>(parse_int(require(meta, "esk_min_width"), "esk_min_width"));
  c.esk.reduction = static_cast<int>(parse_int(require(meta, "esk_reduction"), "esk_reduction"));
  c.esk.spatial_kernel = static_cast<int>(parse_int(require(meta, "esk_spatial_kernel"), "esk_spatial_kernel"));
  c.fc_width = static_cast<int>(parse_int(require(meta, "fc_width"), "fc_width"));
  c.in_channels = static_cast<int>(parse_int(require(meta, "in_channels"), "in_channels"));
  c.input_mean = static_cast<float>(parse_double(require(meta, "input_mean"), "input_mean"));
  c.input_scale = static_cast<float>(parse_double(require(meta, "input_scale"), "input_scale"));
  c.lrn.alpha = parse_double(require(meta, "lrn_alpha"), "lrn_alpha");
  c.lrn.beta = parse_double(require(meta, "lrn_beta"), "lrn_beta");
  c.lrn.k = parse_double(require(meta, "lrn_k"), "lrn_k");
  c.lrn.size = static_cast<int>(parse_int(require(meta, "lrn_size"), "lrn_size"));
  c.patch_size = static_cast<int>(parse_int(require(meta, "patch_size"), "patch_size"));
  c.pool_stride = static_cast<int>(parse_int(require(meta, "pool_stride"), "pool_stride"));
  c.pool_window = static_cast<int>(parse_int(require(meta, "pool_window"), "pool_window"));
  const auto variant = parse_variant(require(meta, "variant"));
  if (!variant) throw DataError("checkpoint: unknown variant");
  const auto stored = static_cast<std::size_t>(parse_int(require(meta, "fc6_stored_domains"), "fc6_stored_domains"));

  Checkpoint ck;
  ck.model = ModelParams<float>::init(c, *variant, stored, 0);
  ck.model.plain_mode = require(meta, "fusion_mode") == "sum" ? FusionMode::Sum : FusionMode::Mean;
  ck.phase = static_cast<int>(parse_int(require(meta, "phase"), "phase"));
  ck.epoch = static_cast<int>(parse_int(require(meta, "epoch"), "epoch"));
  ck.seed = static_cast<std::uint64_t>(parse_int(require(meta, "seed"), "seed"));
  ck.config_hash = require(meta, "config_hash");
  ck.attribute = require(meta, "attribute");
  ck.trained_domains = static_cast<std::size_t>(parse_int(require(meta, "fc6_trained_domains"), "fc6_trained_domains"));
  ck.store_domain_layers = stored > 0 || ck.trained_domains == 0;

  std::size_t applied = 0;
  ck.model.visit("", [&](const std::string& name, Tensor<float>& t) {
    const Tensor<float>* src = a.find(name);
    if (!src) throw DataError(path.string() + ": missing array " + name);
    if (src->shape() != t.shape()) {
      throw DataError(path.string() + ": array " + name + " has shape " + src->shape_string() + ", expected " +
                      t.shape_string());
    }
    t = *src;
    ++applied;
  });
  if (applied != a.arrays.size()) throw DataError(path.string() + ": unexpected extra arrays");
  return ck;
}

std::size_t load_pretrained_backbone(const std::filesystem::path& path, ModelParams<float>& model) {
  const ArrayArchive a = ArrayArchive::load(path);
  std::size_t applied = 0;
  for (int s = 0; s < 2; ++s) {
    for (int l = 0; l < 3; ++l) {
      auto& conv = model.backbone.streams[s].conv[l];
      const std::string layer = "conv" + std::to_string(l + 1);
      const std::string specific = std::string("backbone") + BackboneParams<float>::stream_name(s) + "." + layer;
      const std::string shared = "backbone." + layer;
      for (auto [suffix, target] : {std::pair<const char*, Tensor<float>*>{".weight", &conv.weight},
                                    std::pair<const char*, Tensor<float>*>{".bias", &conv.bias}}) {
        const Tensor<float>* src = a.find(specific + suffix);
        if (!src) src = a.find(shared + suffix);
        if (!src) continue;
        if (src->shape() != target->shape()) {
          throw DataError(path.string() + ": pre-trained " + layer + suffix + " has shape " + src->shape_string() +
                          ", expected " + target->shape_string());
        }
        *target = *src;
        ++applied;
      }
    }
  }
  return applied;
}

}  // namespace eanet
