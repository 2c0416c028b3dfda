#include "eanet/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "eanet/errors.hpp"

namespace fs = std::filesystem;

namespace eanet {

namespace {

constexpr std::array<std::string_view, kEvalAttributeCount> kEvalNames{"BC", "CM", "DEF", "FM", "HO", "LI",
                                                                       "LR", "MB", "NO", "PO", "SV", "TC"};

struct Layout {
  const char* rgb_dir;
  const char* tir_dir;
  const char* rgb_gt;
  const char* tir_gt;
  bool corner_format;
};

Layout layout_for(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Gtot: return {"v", "i", "groundTruth_v.txt", "groundTruth_i.txt", true};
    case DatasetKind::Rgbt234: return {"visible", "infrared", "visible.txt", "infrared.txt", false};
    case DatasetKind::Lasher: return {"visible", "infrared", "visible.txt", "infrared.txt", false};
  }
  throw std::invalid_argument("unknown dataset kind");
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("missing frame folder " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path()) && e.path().filename().string().front() != '.') {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r' || c == ';'; };
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void read_attribute_tags(const fs::path& seq_dir, Sequence& seq) {
  const fs::path list = seq_dir / "attributes.txt";
  if (fs::exists(list)) {
    std::ifstream in(list);
    std::string line;
    while (std::getline(in, line)) {
      for (auto tok : split_tokens(line)) {
        if (auto a = parse_eval_attribute(tok)) {
          seq.set(*a);
        } else {
          throw DataError(list.string() + ": unknown attribute '" + std::string(tok) + "'");
        }
      }
    }
  }
  for (auto a : kAllEvalAttributes) {
    const fs::path tag = seq_dir / (std::string(eval_attribute_name(a)) + ".tag");
    if (!fs::exists(tag)) continue;
    std::ifstream in(tag);
    std::string line;
    while (std::getline(in, line)) {
      for (auto tok : split_tokens(line)) {
        if (tok != "0") seq.set(a);
      }
    }
  }
}

}  // namespace

std::string_view eval_attribute_name(EvalAttribute a) { return kEvalNames[static_cast<std::size_t>(a)]; }

std::optional<EvalAttribute> parse_eval_attribute(std::string_view name) {
  for (std::size_t i = 0; i < kEvalNames.size(); ++i)
    if (kEvalNames[i] == name) return static_cast<EvalAttribute>(i);
  return std::nullopt;
}

std::vector<EvalAttribute> training_attribute_tags(AttributeId branch) {
  switch (branch) {
    case AttributeId::ThermalCrossover: return {EvalAttribute::TC};
    case AttributeId::IlluminationVariation: return {EvalAttribute::LI};
    case AttributeId::ScaleVariation: return {EvalAttribute::SV};
    case AttributeId::Occlusion: return {EvalAttribute::PO, EvalAttribute::HO};
    case AttributeId::FastMotion: return {EvalAttribute::FM};
  }
  return {};
}

std::string_view dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Gtot: return "gtot";
    case DatasetKind::Rgbt234: return "rgbt234";
    case DatasetKind::Lasher: return "lasher";
  }
  return "?";
}

std::optional<DatasetKind> parse_dataset_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto k : {DatasetKind::Gtot, DatasetKind::Rgbt234, DatasetKind::Lasher})
    if (dataset_kind_name(k) == lower) return k;
  return std::nullopt;
}

Image read_image(const fs::path& path, bool grayscale) {
  cv::Mat m = cv::imread(path.string(), grayscale ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot read image " + path.string());
  if (!grayscale) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  Image img(m.cols, m.rows, m.channels());
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<unsigned char>(y);
    for (int i = 0; i < m.cols * m.channels(); ++i) img.pixels[static_cast<std::size_t>(y) * m.cols * m.channels() + i] = row[i];
  }
  return img;
}

void write_image(const Image& image, const fs::path& path) {
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat m(image.height, image.width, type);
  for (int y = 0; y < image.height; ++y) {
    auto* row = m.ptr<unsigned char>(y);
    for (int i = 0; i < image.width * image.channels; ++i) {
      const float v = image.pixels[static_cast<std::size_t>(y) * image.width * image.channels + i];
      row[i] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  if (image.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write image " + path.string());
}

FramePair Sequence::frame(std::size_t i) const {
  if (!frames.empty()) return frames.at(i);
  if (i >= rgb_paths.size()) throw std::out_of_range("Sequence::frame: index out of range");
  FramePair fp;
  fp.rgb = read_image(rgb_paths[i], false);
  fp.tir = replicate_to_rgb(read_image(tir_paths[i], true));
  fp.index = i;
  if (fp.rgb.width != fp.tir.width || fp.rgb.height != fp.tir.height) {
    throw DataError(name + ": frame " + std::to_string(i) + " RGB " + std::to_string(fp.rgb.width) + "x" +
                    std::to_string(fp.rgb.height) + " and TIR " + std::to_string(fp.tir.width) + "x" +
                    std::to_string(fp.tir.height) + " are not aligned");
  }
  return fp;
}

std::optional<BoundingBox> parse_box_line(std::string_view line, const std::string& where) {
  const auto tokens = split_tokens(line);
  std::vector<double> v;
  v.reserve(tokens.size());
  for (auto tok : tokens) {
    double x = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw DataError(where + ": unparsable annotation value '" + std::string(tok) + "'");
    }
    v.push_back(x);
  }
  if (v.size() != 4 && v.size() != 8) {
    throw DataError(where + ": expected 4 or 8 values, got " + std::to_string(v.size()));
  }
  if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) return std::nullopt;
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) return std::nullopt;
  BoundingBox b;
  if (v.size() == 8) {
    const double x0 = std::min({v[0], v[2], v[4], v[6]}), x1 = std::max({v[0], v[2], v[4], v[6]});
    const double y0 = std::min({v[1], v[3], v[5], v[7]}), y1 = std::max({v[1], v[3], v[5], v[7]});
    b = {x0, y0, x1 - x0, y1 - y0};
  } else {
    b = {v[0], v[1], v[2], v[3]};
  }
  if (!b.valid()) return std::nullopt;
  return b;
}

std::vector<std::optional<BoundingBox>> read_annotations(const fs::path& file, bool corner_format) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open annotation file " + file.string());
  std::vector<std::optional<BoundingBox>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    auto box = parse_box_line(line, file.string() + ":" + std::to_string(line_no));
    if (box && corner_format) {
      // x1,y1,x2,y2 was read as x,y,w,h.
      const BoundingBox c{box->x, box->y, box->w - box->x, box->h - box->y};
      box = c.valid() ? std::optional<BoundingBox>(c) : std::nullopt;
    }
    out.push_back(box);
  }
  return out;
}

std::vector<std::string> list_sequences(const fs::path& root, DatasetKind) {
  if (!fs::is_directory(root)) throw DataError("dataset root does not exist: " + root.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root)) {
    const std::string n = e.path().filename().string();
    if (e.is_directory() && !n.empty() && n.front() != '.') names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

Sequence load_sequence(const fs::path& root, DatasetKind kind, const std::string& name) {
  const fs::path dir = root / name;
  if (!fs::is_directory(dir)) throw DataError("sequence folder does not exist: " + dir.string());
  const Layout layout = layout_for(kind);
  Sequence seq;
  seq.name = name;
  seq.rgb_paths = sorted_images(dir / layout.rgb_dir);
  seq.tir_paths = sorted_images(dir / layout.tir_dir);
  if (seq.rgb_paths.size() != seq.tir_paths.size()) {
    throw DataError(name + ": RGB frame count " + std::to_string(seq.rgb_paths.size()) +
                    " differs from TIR frame count " + std::to_string(seq.tir_paths.size()));
  }
  const std::size_t n = seq.rgb_paths.size();
  if (fs::exists(dir / layout.rgb_gt)) {
    seq.ground_truth = read_annotations(dir / layout.rgb_gt, layout.corner_format);
  } else if (fs::exists(dir / "init.txt")) {
    // Initialization-only annotation: frames after the given lines have no ground truth.
    seq.ground_truth = read_annotations(dir / "init.txt", layout.corner_format);
    if (seq.ground_truth.size() < n) seq.ground_truth.resize(n);
  } else {
    throw DataError(name + ": no ground-truth file (" + std::string(layout.rgb_gt) + " or init.txt)");
  }
  if (seq.ground_truth.size() != n) {
    throw DataError(name + ": " + std::to_string(n) + " frames but " + std::to_string(seq.ground_truth.size()) +
                    " ground-truth lines");
  }
  if (fs::exists(dir / layout.tir_gt)) {
    seq.ground_truth_tir = read_annotations(dir / layout.tir_gt, layout.corner_format);
    if (seq.ground_truth_tir.size() != n) {
      throw DataError(name + ": " + std::to_string(n) + " frames but " +
                      std::to_string(seq.ground_truth_tir.size()) + " TIR ground-truth lines");
    }
  }
  read_attribute_tags(dir, seq);
  return seq;
}

std::vector<Sequence> load_dataset(const fs::path& root, DatasetKind kind) {
  std::vector<Sequence> out;
  for (const auto& n : list_sequences(root, kind)) out.push_back(load_sequence(root, kind, n));
  return out;
}

std::vector<Sequence> filter_by_attribute(std::span<const Sequence> sequences, EvalAttribute attr) {
  std::vector<Sequence> out;
  for (const auto& s : sequences)
    if (s.has(attr)) out.push_back(s);
  return out;
}

void write_sequence(const Sequence& sequence, const fs::path& root) {
  const fs::path dir = root / sequence.name;
  fs::create_directories(dir / "visible");
  fs::create_directories(dir / "infrared");
  std::ofstream vis(dir / "visible.txt"), ir(dir / "infrared.txt");
  if (!vis || !ir) throw DataError("cannot write annotations under " + dir.string());
  auto write_box = [](std::ofstream& o, const std::optional<BoundingBox>& b) {
    if (!b) {
      o << "0,0,0,0\n";
      return;
    }
    const double v[4] = {b->x, b->y, b->w, b->h};
    for (int k = 0; k < 4; ++k) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof(buf), v[k]);
      o.write(buf, res.ptr - buf);
      o << (k == 3 ? '\n' : ',');
    }
  };
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const FramePair fp = sequence.frame(i);
    char file[32];
    std::snprintf(file, sizeof(file), "%06zu.png", i + 1);
    write_image(fp.rgb, dir / "visible" / file);
    Image gray(fp.tir.width, fp.tir.height, 1);
    for (std::size_t p = 0; p < gray.pixels.size(); ++p) gray.pixels[p] = fp.tir.pixels[3 * p];
    write_image(gray, dir / "infrared" / file);
    write_box(vis, sequence.ground_truth[i]);
    write_box(ir, sequence.ground_truth_tir.empty() ? sequence.ground_truth[i] : sequence.ground_truth_tir[i]);
  }
  std::ofstream attrs(dir / "attributes.txt");
  for (auto a : kAllEvalAttributes)
    if (sequence.has(a)) attrs << eval_attribute_name(a) << '\n';
}

}  // namespace eanet
