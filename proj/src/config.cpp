#include "eanet/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "eanet/errors.hpp"

namespace eanet {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::string_view tag) { return splitmix(seed ^ fnv1a(tag)); }

[[noreturn]] void bad_value(const std::string& key, std::string_view value, const std::string& expected) {
  throw ConfigError("config key '" + key + "': invalid value '" + std::string(value) + "' (expected " + expected + ")");
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, std::string_view v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

template <typename T>
std::string show(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T, class Access>
Entry number(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return show(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, std::string_view v) { access(c) = parse_number<T>(key, v); }};
}

template <typename T, class Access>
Entry positive(std::string key, Access access) {
  Entry e = number<T>(key, access);
  auto set = e.set;
  e.set = [set, access, key](RunConfig& c, std::string_view v) {
    set(c, v);
    if (!(access(c) > T{0})) bad_value(key, v, "a positive number");
  };
  return e;
}

void apply_preset(RunConfig& c, std::string_view v) {
  if (v == "vgg-m") {
    c.network = NetworkConfig{};
  } else if (v == "desk") {
    c.network = NetworkConfig::desk();
  } else {
    bad_value("network.preset", v, "vgg-m or desk");
  }
  c.network_preset = std::string(v);
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back({"seed", [](const RunConfig& c) { return show(c.seed); },
                 [](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); }});
    e.push_back({"variant", [](const RunConfig& c) { return std::string(variant_name(c.variant)); },
                 [](RunConfig& c, std::string_view v) {
                   const auto p = parse_variant(v);
                   if (!p) bad_value("variant", v, "agg-esk or sum");
                   c.variant = *p;
                 }});
    e.push_back({"sum_reduction",
                 [](const RunConfig& c) { return std::string(c.plain_mode == FusionMode::Sum ? "add" : "mean"); },
                 [](RunConfig& c, std::string_view v) {
                   if (v == "mean") {
                     c.plain_mode = FusionMode::Mean;
                   } else if (v == "add") {
                     c.plain_mode = FusionMode::Sum;
                   } else {
                     bad_value("sum_reduction", v, "mean or add");
                   }
                 }});
    e.push_back({"data.root", [](const RunConfig& c) { return c.data_root.string(); },
                 [](RunConfig& c, std::string_view v) { c.data_root = std::string(v); }});
    e.push_back({"data.kind", [](const RunConfig& c) { return std::string(dataset_kind_name(c.dataset)); },
                 [](RunConfig& c, std::string_view v) {
                   const auto k = parse_dataset_kind(v);
                   if (!k) bad_value("data.kind", v, "gtot, rgbt234 or lasher");
                   c.dataset = *k;
                 }});
    e.push_back({"synth.frames", [](const RunConfig& c) { return show(c.synth_frames); },
                 [](RunConfig& c, std::string_view v) {
                   c.synth_frames = parse_number<int>("synth.frames", v);
                   if (c.synth_frames < 2) bad_value("synth.frames", v, "at least 2");
                 }});

    e.push_back({"network.preset", [](const RunConfig& c) { return c.network_preset; }, apply_preset});
    e.push_back(positive<int>("network.patch_size", [](RunConfig& c) -> int& { return c.network.patch_size; }));
    e.push_back({"network.channels",
                 [](const RunConfig& c) {
                   return show(c.network.channels[0]) + "," + show(c.network.channels[1]) + "," +
                          show(c.network.channels[2]);
                 },
                 [](RunConfig& c, std::string_view v) {
                   std::array<int, 3> ch{};
                   std::size_t start = 0;
                   for (int i = 0; i < 3; ++i) {
                     const auto comma = v.find(',', start);
                     if ((i < 2) != (comma != std::string_view::npos)) bad_value("network.channels", v, "three widths a,b,c");
                     const auto part = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
                     ch[static_cast<std::size_t>(i)] = parse_number<int>("network.channels", part);
                     if (ch[static_cast<std::size_t>(i)] <= 0) bad_value("network.channels", v, "positive widths");
                     start = comma + 1;
                   }
                   c.network.channels = ch;
                 }});
    e.push_back(positive<int>("network.fc_width", [](RunConfig& c) -> int& { return c.network.fc_width; }));
    e.push_back(number<double>("network.dropout", [](RunConfig& c) -> double& { return c.network.dropout; }));
    e.push_back(number<float>("network.input_mean", [](RunConfig& c) -> float& { return c.network.input_mean; }));
    e.push_back(positive<float>("network.input_scale", [](RunConfig& c) -> float& { return c.network.input_scale; }));
    e.push_back(positive<int>("network.pool_window", [](RunConfig& c) -> int& { return c.network.pool_window; }));
    e.push_back(positive<int>("network.pool_stride", [](RunConfig& c) -> int& { return c.network.pool_stride; }));
    e.push_back(positive<int>("network.lrn_size", [](RunConfig& c) -> int& { return c.network.lrn.size; }));
    e.push_back(number<double>("network.lrn_alpha", [](RunConfig& c) -> double& { return c.network.lrn.alpha; }));
    e.push_back(number<double>("network.lrn_beta", [](RunConfig& c) -> double& { return c.network.lrn.beta; }));
    e.push_back(number<double>("network.lrn_k", [](RunConfig& c) -> double& { return c.network.lrn.k; }));
    e.push_back(positive<int>("network.esk_reduction", [](RunConfig& c) -> int& { return c.network.esk.reduction; }));
    e.push_back(positive<int>("network.esk_min_width", [](RunConfig& c) -> int& { return c.network.esk.min_width; }));
    e.push_back(
        positive<int>("network.esk_spatial_kernel", [](RunConfig& c) -> int& { return c.network.esk.spatial_kernel; }));

    e.push_back(number<int>("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; }));
    e.push_back(number<int>("train.iterations_per_epoch", [](RunConfig& c) -> int& { return c.train.iterations_per_epoch; }));
    e.push_back(number<double>("train.learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; }));
    e.push_back(number<double>("train.momentum", [](RunConfig& c) -> double& { return c.train.momentum; }));
    e.push_back(number<double>("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; }));
    e.push_back(number<int>("train.frames_per_batch", [](RunConfig& c) -> int& { return c.train.frames_per_batch; }));
    e.push_back(number<int>("train.batch_positives", [](RunConfig& c) -> int& { return c.train.batch_positives; }));
    e.push_back(number<int>("train.batch_negatives", [](RunConfig& c) -> int& { return c.train.batch_negatives; }));
    e.push_back(number<int>("train.negative_pool", [](RunConfig& c) -> int& { return c.train.negative_pool; }));
    e.push_back(number<double>("train.positive_iou", [](RunConfig& c) -> double& { return c.train.positive_iou; }));
    e.push_back(number<double>("train.negative_iou", [](RunConfig& c) -> double& { return c.train.negative_iou; }));
    e.push_back(number<double>("train.positive_sigma_xy",
                               [](RunConfig& c) -> double& { return c.train.positive_spread.sigma_xy; }));
    e.push_back(number<double>("train.positive_sigma_scale",
                               [](RunConfig& c) -> double& { return c.train.positive_spread.sigma_scale; }));
    e.push_back(number<double>("train.negative_sigma_xy",
                               [](RunConfig& c) -> double& { return c.train.negative_spread.sigma_xy; }));
    e.push_back(number<double>("train.negative_sigma_scale",
                               [](RunConfig& c) -> double& { return c.train.negative_spread.sigma_scale; }));
    e.push_back({"train.pretrained", [](const RunConfig& c) { return c.pretrained.string(); },
                 [](RunConfig& c, std::string_view v) { c.pretrained = std::string(v); }});

    auto& t = e;
    t.push_back(number<int>("tracker.candidates", [](RunConfig& c) -> int& { return c.tracker.candidates; }));
    t.push_back(number<int>("tracker.top_k", [](RunConfig& c) -> int& { return c.tracker.top_k; }));
    t.push_back(number<double>("tracker.success_threshold",
                               [](RunConfig& c) -> double& { return c.tracker.success_threshold; }));
    t.push_back(number<int>("tracker.init_positives", [](RunConfig& c) -> int& { return c.tracker.init_positives; }));
    t.push_back(number<int>("tracker.init_negatives", [](RunConfig& c) -> int& { return c.tracker.init_negatives; }));
    t.push_back(number<double>("tracker.init_negative_iou",
                               [](RunConfig& c) -> double& { return c.tracker.init_negative_iou; }));
    t.push_back(
        number<int>("tracker.regression_samples", [](RunConfig& c) -> int& { return c.tracker.regression_samples; }));
    t.push_back(number<double>("tracker.regression_iou", [](RunConfig& c) -> double& { return c.tracker.regression_iou; }));
    t.push_back(
        number<double>("tracker.regression_lambda", [](RunConfig& c) -> double& { return c.tracker.regression_lambda; }));
    t.push_back(number<int>("tracker.update_positives", [](RunConfig& c) -> int& { return c.tracker.update_positives; }));
    t.push_back(number<int>("tracker.update_negatives", [](RunConfig& c) -> int& { return c.tracker.update_negatives; }));
    t.push_back(number<double>("tracker.positive_iou", [](RunConfig& c) -> double& { return c.tracker.positive_iou; }));
    t.push_back(number<double>("tracker.update_negative_iou",
                               [](RunConfig& c) -> double& { return c.tracker.update_negative_iou; }));
    t.push_back(number<int>("tracker.long_interval", [](RunConfig& c) -> int& { return c.tracker.long_interval; }));
    t.push_back(number<int>("tracker.long_memory", [](RunConfig& c) -> int& { return c.tracker.long_memory; }));
    t.push_back(number<int>("tracker.short_memory", [](RunConfig& c) -> int& { return c.tracker.short_memory; }));
    t.push_back(number<int>("tracker.init_iterations", [](RunConfig& c) -> int& { return c.tracker.init_iterations; }));
    t.push_back(number<int>("tracker.update_iterations", [](RunConfig& c) -> int& { return c.tracker.update_iterations; }));
    t.push_back(number<double>("tracker.init_learning_rate",
                               [](RunConfig& c) -> double& { return c.tracker.init_learning_rate; }));
    t.push_back(number<double>("tracker.update_learning_rate",
                               [](RunConfig& c) -> double& { return c.tracker.update_learning_rate; }));
    t.push_back(number<double>("tracker.domain_lr_multiplier",
                               [](RunConfig& c) -> double& { return c.tracker.domain_lr_multiplier; }));
    t.push_back(number<double>("tracker.momentum", [](RunConfig& c) -> double& { return c.tracker.momentum; }));
    t.push_back(number<double>("tracker.weight_decay", [](RunConfig& c) -> double& { return c.tracker.weight_decay; }));
    t.push_back(number<int>("tracker.batch_positives", [](RunConfig& c) -> int& { return c.tracker.batch_positives; }));
    t.push_back(number<int>("tracker.batch_negatives", [](RunConfig& c) -> int& { return c.tracker.batch_negatives; }));
    t.push_back(number<int>("tracker.negative_pool", [](RunConfig& c) -> int& { return c.tracker.negative_pool; }));
    t.push_back(number<double>("tracker.candidate_sigma_xy",
                               [](RunConfig& c) -> double& { return c.tracker.candidate_spread.sigma_xy; }));
    t.push_back(number<double>("tracker.candidate_sigma_scale",
                               [](RunConfig& c) -> double& { return c.tracker.candidate_spread.sigma_scale; }));
    t.push_back(
        number<double>("tracker.failure_expansion", [](RunConfig& c) -> double& { return c.tracker.failure_expansion; }));
    t.push_back(number<double>("tracker.positive_sigma_xy",
                               [](RunConfig& c) -> double& { return c.tracker.positive_spread.sigma_xy; }));
    t.push_back(number<double>("tracker.positive_sigma_scale",
                               [](RunConfig& c) -> double& { return c.tracker.positive_spread.sigma_scale; }));
    t.push_back(number<double>("tracker.negative_sigma_xy",
                               [](RunConfig& c) -> double& { return c.tracker.negative_spread.sigma_xy; }));
    t.push_back(number<double>("tracker.negative_sigma_scale",
                               [](RunConfig& c) -> double& { return c.tracker.negative_spread.sigma_scale; }));
    t.push_back(number<double>("tracker.regression_sigma_xy",
                               [](RunConfig& c) -> double& { return c.tracker.regression_spread.sigma_xy; }));
    t.push_back(number<double>("tracker.regression_sigma_scale",
                               [](RunConfig& c) -> double& { return c.tracker.regression_spread.sigma_scale; }));
    return e;
  }();
  return entries;
}

const Entry* find_entry(std::string_view key) {
  for (const auto& e : registry()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

bool is_path_key(std::string_view key) { return key == "data.root" || key == "train.pretrained"; }

}  // namespace

std::uint64_t RunConfig::derived_seed(std::string_view tag) const { return derive(seed, tag); }

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& e : registry()) out += e.key + " = " + e.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : registry()) {
    if (is_path_key(e.key)) continue;
    h = fnv1a(e.key + "=" + e.get(*this) + "\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : registry()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& assignments) {
  RunConfig c;
  for (const auto& [k, v] : assignments) {
    if (!find_entry(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  // The preset replaces the whole network block, so it goes first.
  for (const auto& [k, v] : assignments) {
    if (k == "network.preset") apply_preset(c, v);
  }
  for (const auto& [k, v] : assignments) {
    if (k != "network.preset") find_entry(k)->set(c, v);
  }
  c.train.seed = c.train_seed("default");
  c.train.config_hash = c.hash();
  c.tracker.seed = c.track_seed("default");
  c.train.validate();
  c.tracker.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> assignments;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) assignments.emplace_back("data.root", env);
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto parsed = parse_config_text(ss.str(), file.string());
    assignments.insert(assignments.end(), parsed.begin(), parsed.end());
  }
  for (const auto& o : overrides) {
    auto parsed = parse_config_text(o, "--set " + o);
    if (parsed.size() != 1) throw ConfigError("--set expects key=value, got '" + o + "'");
    assignments.push_back(parsed[0]);
  }
  return resolve_config(assignments);
}

}  // namespace eanet
