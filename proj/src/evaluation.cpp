#include "eanet/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "eanet/errors.hpp"
#include "eanet/tracker.hpp"

namespace eanet {

std::vector<double> precision_thresholds() {
  std::vector<double> t(51);
  for (int i = 0; i <= 50; ++i) t[static_cast<std::size_t>(i)] = i;
  return t;
}

std::vector<double> success_thresholds() {
  std::vector<double> t(21);
  for (int i = 0; i <= 20; ++i) t[static_cast<std::size_t>(i)] = i / 20.0;
  return t;
}

void FrameErrors::append(const FrameErrors& other) {
  distances.insert(distances.end(), other.distances.begin(), other.distances.end());
  overlaps.insert(overlaps.end(), other.overlaps.begin(), other.overlaps.end());
}

FrameErrors frame_errors(std::span<const BoundingBox> pred, std::span<const std::optional<BoundingBox>> gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("frame_errors: " + std::to_string(pred.size()) + " predictions for " +
                                std::to_string(gt.size()) + " ground-truth frames");
  }
  FrameErrors e;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!gt[i]) continue;
    e.distances.push_back(center_distance(pred[i], *gt[i]));
    e.overlaps.push_back(iou(pred[i], *gt[i]));
  }
  return e;
}

namespace {

// Sorting once lets every threshold be answered by binary search, which keeps
// 51- and 21-point curves cheap on long sequences.
EvalCurve rate_curve(std::vector<double> values, const std::vector<double>& thresholds, bool at_most) {
  EvalCurve c{thresholds, std::vector<double>(thresholds.size(), 0.0)};
  if (values.empty()) return c;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    if (at_most) {
      c.rates[i] = static_cast<double>(std::upper_bound(values.begin(), values.end(), t) - values.begin()) / n;
    } else {
      c.rates[i] = static_cast<double>(values.end() - std::upper_bound(values.begin(), values.end(), t)) / n;
    }
  }
  return c;
}

std::vector<std::optional<BoundingBox>> all_present(std::span<const BoundingBox> gt) {
  if (gt.empty()) throw std::invalid_argument("evaluation curve needs at least one frame");
  return {gt.begin(), gt.end()};
}

}  // namespace

EvalCurve precision_curve(const FrameErrors& errors, const std::vector<double>& thresholds) {
  return rate_curve(errors.distances, thresholds, true);
}

EvalCurve success_curve(const FrameErrors& errors, const std::vector<double>& thresholds) {
  return rate_curve(errors.overlaps, thresholds, false);
}

EvalCurve precision_curve(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt,
                          const std::vector<double>& thresholds) {
  return precision_curve(frame_errors(pred, all_present(gt)), thresholds);
}

EvalCurve success_curve(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt,
                        const std::vector<double>& thresholds) {
  return success_curve(frame_errors(pred, all_present(gt)), thresholds);
}

double precision_score(const FrameErrors& errors) {
  return precision_curve(errors, {kPrecisionThreshold}).rates[0];
}

double success_score(const FrameErrors& errors) {
  const EvalCurve c = success_curve(errors);
  double s = 0;
  for (double r : c.rates) s += r;
  return s / static_cast<double>(c.rates.size());
}

namespace {

ScoreRow make_row(std::string label, std::size_t sequences, const FrameErrors& e) {
  ScoreRow r;
  r.label = std::move(label);
  r.sequences = sequences;
  r.frames = e.size();
  if (e.size() > 0) {
    r.pr = precision_score(e);
    r.sr = success_score(e);
  }
  return r;
}

}  // namespace

EvalReport evaluate(std::span<const Sequence> sequences, std::span<const std::vector<BoundingBox>> predictions,
                    const std::string& tracker) {
  if (sequences.size() != predictions.size()) throw std::invalid_argument("evaluate: one prediction list per sequence");
  EvalReport report;
  report.tracker = tracker;
  std::vector<FrameErrors> per_seq;
  FrameErrors pooled;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    if (predictions[i].size() != s.size()) {
      throw DataError("sequence " + s.name + ": " + std::to_string(predictions[i].size()) + " result boxes for " +
                      std::to_string(s.size()) + " frames");
    }
    per_seq.push_back(frame_errors(predictions[i], s.ground_truth));
    pooled.append(per_seq.back());
    report.per_sequence.push_back(make_row(s.name, 1, per_seq.back()));
  }
  for (auto a : kAllEvalAttributes) {
    FrameErrors e;
    std::size_t n = 0;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      if (!sequences[i].has(a)) continue;
      e.append(per_seq[i]);
      ++n;
    }
    report.per_attribute.push_back(make_row(std::string(eval_attribute_name(a)), n, e));
  }
  report.all = make_row("ALL", sequences.size(), pooled);
  report.precision = precision_curve(pooled);
  report.success = success_curve(pooled);
  return report;
}

EvalReport evaluate_directory(const std::filesystem::path& results_dir, std::span<const Sequence> sequences,
                              const std::string& tracker) {
  std::vector<std::vector<BoundingBox>> predictions;
  for (const auto& s : sequences) {
    const auto file = results_dir / (s.name + ".txt");
    if (!std::filesystem::exists(file)) throw DataError("sequence " + s.name + ": missing result file " + file.string());
    auto boxes = read_results(file);
    if (boxes.size() != s.size()) {
      throw DataError("sequence " + s.name + ": result file has " + std::to_string(boxes.size()) + " lines, expected " +
                      std::to_string(s.size()));
    }
    predictions.push_back(std::move(boxes));
  }
  return evaluate(sequences, predictions, tracker);
}

namespace {

std::string fixed3(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", *v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string format_report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-10s %7s %7s %6s %8s\n", "attribute", "PR", "SR", "seqs", "frames");
  out << "tracker: " << report.tracker << '\n' << line;
  auto row = [&](const ScoreRow& r) {
    std::snprintf(line, sizeof(line), "%-10s %7s %7s %6zu %8zu\n", r.label.c_str(), fixed3(r.pr).c_str(),
                  fixed3(r.sr).c_str(), r.sequences, r.frames);
    out << line;
  };
  for (const auto& r : report.per_attribute) row(r);
  row(report.all);
  return out.str();
}

std::string format_report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "attribute,pr,sr,n_sequences,n_frames\n";
  auto row = [&](const ScoreRow& r) {
    out << r.label << ',' << (r.pr ? shortest(*r.pr) : "n/a") << ',' << (r.sr ? shortest(*r.sr) : "n/a") << ','
        << r.sequences << ',' << r.frames << '\n';
  };
  for (const auto& r : report.per_attribute) row(r);
  row(report.all);
  return out.str();
}

std::optional<CurveFormat> parse_curve_format(std::string_view name) {
  if (name == "csv") return CurveFormat::Csv;
  if (name == "png" || name == "image") return CurveFormat::Png;
  return std::nullopt;
}

namespace {

// Series names are written as "<name> [<score>]".
std::string legend_label(const CurveSeries& s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", s.score);
  return s.name + " [" + buf + "]";
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveSeries> series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "threshold";
  for (const auto& s : series) {
    if (s.name.find_first_of(",[]\n") != std::string::npos) throw std::invalid_argument("curve name must not contain ',', '[', ']'");
    out << ',' << s.name << " [" << shortest(s.score) << ']';
  }
  out << '\n';
  const std::size_t n = series.empty() ? 0 : series[0].curve.thresholds.size();
  for (std::size_t i = 0; i < n; ++i) {
    out << shortest(series[0].curve.thresholds[i]);
    for (const auto& s : series) out << ',' << shortest(s.curve.rates.at(i));
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

void write_curve_png(const std::filesystem::path& path, std::span<const CurveSeries> series, const std::string& title,
                     const std::string& x_label, double x_max) {
  const int W = 640, H = 480, left = 70, right = 20, top = 40, bottom = 60;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>(x / x_max * pw + 0.5), top + static_cast<int>((1.0 - y) * ph + 0.5));
  };
  const cv::Scalar grid(220, 220, 220), ink(0, 0, 0);
  for (int k = 0; k <= 10; ++k) {
    const double y = k / 10.0;
    cv::line(img, px(0, y), px(x_max, y), grid, 1);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", y);
    cv::putText(img, buf, px(0, y) + cv::Point(-40, 5), cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1);
    const double x = x_max * k / 10.0;
    cv::line(img, px(x, 0), px(x, 1), grid, 1);
    std::snprintf(buf, sizeof(buf), x_max > 1 ? "%.0f" : "%.1f", x);
    cv::putText(img, buf, px(x, 0) + cv::Point(-8, 18), cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1);
  }
  cv::rectangle(img, px(0, 1), px(x_max, 0), ink, 1);
  cv::putText(img, title, cv::Point(left, 25), cv::FONT_HERSHEY_SIMPLEX, 0.6, ink, 1);
  cv::putText(img, x_label, cv::Point(left + pw / 2 - 60, H - 15), cv::FONT_HERSHEY_SIMPLEX, 0.5, ink, 1);
  static const cv::Scalar palette[] = {{40, 40, 220}, {200, 80, 30}, {40, 160, 40}, {160, 40, 160}, {30, 140, 200}};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& c = series[k].curve;
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) pts.push_back(px(c.thresholds[i], c.rates[i]));
    const cv::Scalar color = palette[k % std::size(palette)];
    cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    const cv::Point at(W - right - 230, top + 20 + 20 * static_cast<int>(k));
    cv::line(img, at, at + cv::Point(20, 0), color, 2);
    cv::putText(img, legend_label(series[k]), at + cv::Point(26, 5), cv::FONT_HERSHEY_SIMPLEX, 0.45, ink, 1);
  }
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_curves(std::span<const EvalReport> reports, const std::filesystem::path& out_dir,
                                               CurveFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<CurveSeries> pr, sr;
  for (const auto& r : reports) {
    pr.push_back({r.tracker, r.all.pr.value_or(0.0), r.precision});
    sr.push_back({r.tracker, r.all.sr.value_or(0.0), r.success});
  }
  std::vector<std::filesystem::path> written;
  if (format == CurveFormat::Csv) {
    written = {out_dir / "precision.csv", out_dir / "success.csv"};
    write_curve_csv(written[0], pr);
    write_curve_csv(written[1], sr);
  } else {
    written = {out_dir / "precision.png", out_dir / "success.png"};
    write_curve_png(written[0], pr, "Precision plot", "location error threshold (px)", 50.0);
    write_curve_png(written[1], sr, "Success plot", "overlap threshold", 1.0);
  }
  return written;
}

std::vector<CurveSeries> read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty curve file");
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string p;
    while (std::getline(ss, p, ',')) parts.push_back(p);
    return parts;
  };
  auto number = [&](const std::string& s, std::size_t line_no) {
    double v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
    }
    return v;
  };
  const auto header = split(line);
  if (header.empty() || header[0] != "threshold") throw DataError(path.string() + ": missing header");
  std::vector<CurveSeries> series;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const auto& h = header[k];
    const auto open = h.rfind(" [");
    if (open == std::string::npos || h.back() != ']') throw DataError(path.string() + ": bad series label '" + h + "'");
    CurveSeries s;
    s.name = h.substr(0, open);
    s.score = number(h.substr(open + 2, h.size() - open - 3), 1);
    series.push_back(std::move(s));
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = split(line);
    if (parts.size() != header.size()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    const double t = number(parts[0], line_no);
    for (std::size_t k = 0; k < series.size(); ++k) {
      series[k].curve.thresholds.push_back(t);
      series[k].curve.rates.push_back(number(parts[k + 1], line_no));
    }
  }
  return series;
}

}  // namespace eanet
