#include <gtest/gtest.h>

#include <fstream>

#include "eanet/datasets.hpp"
#include "eanet/errors.hpp"
#include "test_util.hpp"

namespace eanet::test {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream(file) << text;
}

void write_frames(const fs::path& dir, int count, int w = 8, int h = 6) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.png", i);
    write_image(Image(w, h, dir.filename() == "visible" || dir.filename() == "v" ? 3 : 1, float(10 * i)), dir / name);
  }
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

TEST(Annotations, ParsesCommaLine) {
  const auto b = parse_box_line("24,30,50,60", "t");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->x, 24);
  EXPECT_EQ(b->y, 30);
  EXPECT_EQ(b->w, 50);
  EXPECT_EQ(b->h, 60);
}

TEST(Annotations, ToleratesWhitespaceAndDecimals) {
  const auto b = parse_box_line("  1.5\t2.25  3 ,4\r", "t");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->x, 1.5);
  EXPECT_EQ(b->y, 2.25);
  EXPECT_EQ(b->w, 3);
  EXPECT_EQ(b->h, 4);
}

TEST(Annotations, PolygonBecomesEnclosingBox) {
  const auto b = parse_box_line("10,20,40,22,38,60,8,58", "t");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->x, 8);
  EXPECT_EQ(b->y, 20);
  EXPECT_EQ(b->w, 32);
  EXPECT_EQ(b->h, 40);
}

TEST(Annotations, ZeroAndNanBoxesAreAbsent) {
  EXPECT_FALSE(parse_box_line("0,0,0,0", "t"));
  EXPECT_FALSE(parse_box_line("nan,nan,nan,nan", "t"));
  EXPECT_FALSE(parse_box_line("5,5,0,3", "t"));
}

TEST(Annotations, BadLinesNameTheLocation) {
  EXPECT_THROW(parse_box_line("1,2,3", "t"), DataError);
  EXPECT_THROW(parse_box_line("1,2,x,4", "t"), DataError);
  TempDir dir("ann");
  write_text(dir.path() / "gt.txt", "1,2,3,4\n\n5,6,7,oops\n");
  const std::string msg = error_of([&] { read_annotations(dir.path() / "gt.txt"); });
  EXPECT_NE(msg.find("gt.txt:3"), std::string::npos) << msg;
  EXPECT_THROW(read_annotations(dir.path() / "missing.txt"), DataError);
}

TEST(Annotations, CornerFormatConvertsToExtent) {
  TempDir dir("corner");
  write_text(dir.path() / "gt.txt", "10 20 50 80\n");
  const auto boxes = read_annotations(dir.path() / "gt.txt", true);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0]->w, 40);
  EXPECT_EQ(boxes[0]->h, 60);
}

TEST(ListSequences, EmptySortedAndHidden) {
  TempDir dir("list");
  EXPECT_TRUE(list_sequences(dir.path(), DatasetKind::Rgbt234).empty());
  for (const char* n : {"zeta", "alpha", "mid", ".hidden"}) fs::create_directories(dir.path() / n);
  write_text(dir.path() / "notes.txt", "x");
  EXPECT_EQ(list_sequences(dir.path(), DatasetKind::Rgbt234), (std::vector<std::string>{"alpha", "mid", "zeta"}));
  EXPECT_THROW(list_sequences(dir.path() / "nope", DatasetKind::Rgbt234), DataError);
}

TEST(LoadSequence, Rgbt234Layout) {
  TempDir dir("rgbt");
  const fs::path seq = dir.path() / "car";
  write_frames(seq / "visible", 3);
  write_frames(seq / "infrared", 3);
  write_text(seq / "visible.txt", "1,1,4,3\n2,1,4,3\n3,1,4,3\n");
  write_text(seq / "infrared.txt", "1,2,4,3\n2,2,4,3\n3,2,4,3\n");
  write_text(seq / "attributes.txt", "FM SV\n");
  const auto s = load_sequence(dir.path(), DatasetKind::Rgbt234, "car");
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.rgb_paths.size(), 3u);
  EXPECT_EQ(s.ground_truth[2]->x, 3);
  EXPECT_EQ(s.ground_truth_tir[0]->y, 2);
  EXPECT_TRUE(s.has(EvalAttribute::FM));
  EXPECT_TRUE(s.has(EvalAttribute::SV));
  EXPECT_FALSE(s.has(EvalAttribute::TC));
  const auto f = s.frame(1);
  EXPECT_EQ(f.rgb.channels, 3);
  EXPECT_EQ(f.tir.channels, 3);
  EXPECT_EQ(f.tir.at(0, 0, 2), 10.0f);
  EXPECT_THROW(s.frame(3), std::out_of_range);
}

TEST(LoadSequence, GtotCornerAnnotations) {
  TempDir dir("gtot");
  const fs::path seq = dir.path() / "BlackCar";
  write_frames(seq / "v", 2);
  write_frames(seq / "i", 2);
  write_text(seq / "groundTruth_v.txt", "1 1 5 4\n2 1 6 4\n");
  write_text(seq / "groundTruth_i.txt", "1 1 5 4\n2 1 6 4\n");
  const auto s = load_sequence(dir.path(), DatasetKind::Gtot, "BlackCar");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.ground_truth[1]->x, 2);
  EXPECT_EQ(s.ground_truth[1]->w, 4);
  EXPECT_EQ(s.ground_truth[1]->h, 3);
}

TEST(LoadSequence, LasherInitOnlyAnnotation) {
  TempDir dir("lasher");
  const fs::path seq = dir.path() / "boy";
  write_frames(seq / "visible", 4);
  write_frames(seq / "infrared", 4);
  write_text(seq / "init.txt", "1,1,3,3\n");
  const auto s = load_sequence(dir.path(), DatasetKind::Lasher, "boy");
  ASSERT_EQ(s.size(), 4u);
  EXPECT_TRUE(s.ground_truth[0]);
  EXPECT_FALSE(s.ground_truth[3]);
}

TEST(LoadSequence, FrameCountMismatchNamesBothCounts) {
  TempDir dir("mismatch");
  const fs::path seq = dir.path() / "s";
  write_frames(seq / "visible", 3);
  write_frames(seq / "infrared", 2);
  write_text(seq / "visible.txt", "1,1,4,3\n1,1,4,3\n1,1,4,3\n");
  const std::string msg = error_of([&] { load_sequence(dir.path(), DatasetKind::Rgbt234, "s"); });
  EXPECT_NE(msg.find("3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("TIR"), std::string::npos) << msg;
}

TEST(LoadSequence, NeverTruncatesAnnotations) {
  TempDir dir("trunc");
  const fs::path seq = dir.path() / "s";
  write_frames(seq / "visible", 2);
  write_frames(seq / "infrared", 2);
  write_text(seq / "visible.txt", "1,1,4,3\n1,1,4,3\n1,1,4,3\n");
  EXPECT_THROW(load_sequence(dir.path(), DatasetKind::Rgbt234, "s"), DataError);
  write_text(seq / "visible.txt", "1,1,4,3\n");
  EXPECT_THROW(load_sequence(dir.path(), DatasetKind::Rgbt234, "s"), DataError);
  write_text(seq / "visible.txt", "1,1,4,3\n1,1,4,3\n");
  write_text(seq / "attributes.txt", "XX\n");
  EXPECT_THROW(load_sequence(dir.path(), DatasetKind::Rgbt234, "s"), DataError);
  fs::remove(seq / "visible.txt");
  EXPECT_THROW(load_sequence(dir.path(), DatasetKind::Rgbt234, "s"), DataError);
  EXPECT_THROW(load_sequence(dir.path(), DatasetKind::Rgbt234, "absent"), DataError);
}

TEST(Filter, EdgeCasesAndOracle) {
  std::vector<Sequence> seqs(12);
  for (std::size_t i = 0; i < seqs.size(); ++i) seqs[i].name = "s" + std::to_string(i);
  EXPECT_TRUE(filter_by_attribute(seqs, EvalAttribute::FM).empty());
  for (auto& s : seqs) s.set(EvalAttribute::CM);
  EXPECT_EQ(filter_by_attribute(seqs, EvalAttribute::CM).size(), seqs.size());
  Rng rng(1);
  std::bernoulli_distribution coin(0.4);
  for (auto& s : seqs)
    for (auto a : kAllEvalAttributes)
      if (coin(rng)) s.set(a);
  for (auto a : kAllEvalAttributes) {
    std::vector<std::string> oracle;
    for (const auto& s : seqs)
      if (s.attributes[static_cast<std::size_t>(a)]) oracle.push_back(s.name);
    std::vector<std::string> got;
    for (const auto& s : filter_by_attribute(seqs, a)) got.push_back(s.name);
    EXPECT_EQ(got, oracle) << eval_attribute_name(a);
  }
}

TEST(EvalAttributes, TwelveNamesRoundTrip) {
  EXPECT_EQ(kAllEvalAttributes.size(), 12u);
  for (auto a : kAllEvalAttributes) EXPECT_EQ(parse_eval_attribute(eval_attribute_name(a)), a);
  EXPECT_FALSE(parse_eval_attribute("fm"));
  EXPECT_EQ(training_attribute_tags(AttributeId::Occlusion),
            (std::vector<EvalAttribute>{EvalAttribute::PO, EvalAttribute::HO}));
  EXPECT_EQ(training_attribute_tags(AttributeId::IlluminationVariation), (std::vector<EvalAttribute>{EvalAttribute::LI}));
}

TEST(Synthetic, StaticSpecKeepsBox) {
  SynthSpec spec;
  spec.frames = 6;
  const auto s = synth_sequence(spec, 1);
  ASSERT_EQ(s.size(), 6u);
  for (const auto& b : s.ground_truth) {
    EXPECT_EQ(b->x, spec.start.x);
    EXPECT_EQ(b->w, spec.start.w);
  }
  EXPECT_TRUE(s.has(EvalAttribute::NO));
}

TEST(Synthetic, LinearMotionIsArithmetic) {
  SynthSpec spec;
  spec.frames = 10;
  spec.dx = 2;
  const auto s = synth_sequence(spec, 2);
  for (std::size_t t = 1; t < s.size(); ++t) EXPECT_DOUBLE_EQ(s.ground_truth[t]->x - s.ground_truth[t - 1]->x, 2.0);
  EXPECT_FALSE(s.has(EvalAttribute::FM));
}

TEST(Synthetic, FixedSeedIsBitIdentical) {
  const auto suite = default_synthetic_suite(5);
  for (const auto& spec : suite) {
    const auto a = synth_sequence(spec, 7), b = synth_sequence(spec, 7), c = synth_sequence(spec, 8);
    bool differs = false;
    for (std::size_t t = 0; t < a.size(); ++t) {
      EXPECT_EQ(a.frames[t].rgb, b.frames[t].rgb);
      EXPECT_EQ(a.frames[t].tir, b.frames[t].tir);
      differs |= !(a.frames[t].rgb == c.frames[t].rgb);
    }
    EXPECT_TRUE(differs) << spec.name;
  }
}

double mean_inside(const Image& img, const BoundingBox& b, bool inside) {
  double s = 0;
  int n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const bool in = x + 0.5 > b.x && x + 0.5 < b.right() && y + 0.5 > b.y && y + 0.5 < b.bottom();
      if (in != inside) continue;
      s += img.at(x, y, 0);
      ++n;
    }
  return s / n;
}

TEST(Synthetic, TargetIsHotUntilCrossover) {
  SynthSpec spec;
  spec.frames = 8;
  spec.crossover_start = 4;
  const auto s = synth_sequence(spec, 3);
  const auto& b0 = *s.ground_truth[0];
  EXPECT_GT(mean_inside(s.frames[0].tir, b0, true), mean_inside(s.frames[0].tir, b0, false) + 50);
  const auto& b6 = *s.ground_truth[6];
  EXPECT_LT(std::abs(mean_inside(s.frames[6].tir, b6, true) - mean_inside(s.frames[6].tir, b6, false)), 50);
  EXPECT_TRUE(s.has(EvalAttribute::TC));
  for (float v : s.frames[0].rgb.pixels) {
    EXPECT_EQ(v, std::round(v));
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 255.0f);
  }
}

TEST(Synthetic, SuiteCoversEveryTrainingAttribute) {
  std::vector<Sequence> seqs;
  for (const auto& spec : default_synthetic_suite(12)) seqs.push_back(synth_sequence(spec, 4));
  for (auto a : kAllAttributes) {
    bool covered = false;
    for (auto tag : training_attribute_tags(a)) covered |= !filter_by_attribute(seqs, tag).empty();
    EXPECT_TRUE(covered) << attribute_name(a);
  }
}

TEST(Synthetic, WriteThenLoadRoundTrips) {
  TempDir dir("roundtrip");
  SynthSpec spec;
  spec.name = "rt";
  spec.frames = 4;
  spec.dx = 1.5;
  spec.occlusion_start = 1;
  spec.occlusion_length = 1;
  const auto s = synth_sequence(spec, 5);
  write_sequence(s, dir.path());
  const auto loaded = load_sequence(dir.path(), DatasetKind::Rgbt234, "rt");
  ASSERT_EQ(loaded.size(), s.size());
  EXPECT_EQ(loaded.attributes, s.attributes);
  for (std::size_t t = 0; t < s.size(); ++t) {
    EXPECT_EQ(*loaded.ground_truth[t], *s.ground_truth[t]);
    const auto f = loaded.frame(t);
    EXPECT_EQ(f.rgb, s.frames[t].rgb);
    EXPECT_EQ(f.tir, s.frames[t].tir);
  }
  EXPECT_EQ(load_dataset(dir.path(), DatasetKind::Rgbt234).size(), 1u);
}

}  // namespace
}  // namespace eanet::test
