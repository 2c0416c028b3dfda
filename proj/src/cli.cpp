#include "eanet/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "eanet/errors.hpp"

namespace eanet {

namespace fs = std::filesystem;

void OutputLayout::prepare(const fs::path& dir, const RunConfig& config) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream out(dir / "config.txt", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / "config.txt").string());
  out << "# config_hash = " << config.hash() << '\n' << config.echo();
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_loss_trace(const fs::path& path, const std::vector<double>& trace) {
  std::ostringstream s;
  s << "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, trace[i]);
    s << buf;
  }
  write_text(path, s.str());
}

// Phase-1 branches do not depend on the ablation switch, so their hash
// ignores it and both variants can share them.
RunConfig phase1_view(const RunConfig& config) {
  RunConfig c = config;
  c.variant = Variant::AggEsk;
  c.plain_mode = FusionMode::Mean;
  return c;
}

TrainProgress progress_logger(std::ostream& log, std::string label, std::size_t total) {
  const std::size_t every = std::max<std::size_t>(1, total / 10);
  return [&log, label = std::move(label), total, every](std::size_t it, double loss) {
    if ((it + 1) % every == 0 || it + 1 == total) {
      log << label << " iteration " << (it + 1) << "/" << total << " loss " << loss << '\n';
    }
  };
}

fs::path phase1_path(const OutputLayout& layout, AttributeId a) {
  return layout.checkpoints() / ("phase1_" + std::string(attribute_name(a)) + ".ckpt");
}

fs::path phase2_path(const OutputLayout& layout, Variant v) {
  return layout.checkpoints() / ("phase2_" + std::string(variant_name(v)) + ".ckpt");
}

std::vector<Checkpoint> load_branches(const fs::path& dir) {
  std::vector<Checkpoint> out;
  for (auto a : kAllAttributes) {
    const auto p = dir / ("phase1_" + std::string(attribute_name(a)) + ".ckpt");
    if (!fs::exists(p)) throw DataError("missing phase-1 checkpoint " + p.string());
    out.push_back(load_checkpoint(p));
  }
  return out;
}

std::optional<Checkpoint> reusable(const fs::path& path, const std::string& hash, std::ostream& log) {
  if (!fs::exists(path)) return std::nullopt;
  Checkpoint ck = load_checkpoint(path);
  if (ck.config_hash != hash) {
    log << "retraining: " << path.string() << " was produced by a different configuration\n";
    return std::nullopt;
  }
  log << "reusing " << path.string() << '\n';
  return ck;
}

void write_report(const fs::path& dir, const std::string& stem, const EvalReport& report) {
  write_text(dir / (stem + ".txt"), format_report_table(report));
  write_text(dir / (stem + ".csv"), format_report_csv(report));
}

}  // namespace

std::vector<Sequence> load_run_data(const RunConfig& config) {
  if (config.data_root.empty()) {
    throw ConfigError(std::string("no data root: pass --data, set data.root, or export ") + kDataRootEnv);
  }
  auto data = load_dataset(config.data_root, config.dataset);
  if (data.empty()) throw DataError("no sequences under " + config.data_root.string());
  return data;
}

std::vector<Sequence> branch_training_set(std::span<const Sequence> data, AttributeId attribute) {
  const auto tags = training_attribute_tags(attribute);
  std::vector<Sequence> out;
  for (const auto& s : data) {
    if (std::any_of(tags.begin(), tags.end(), [&](EvalAttribute a) { return s.has(a); })) out.push_back(s);
  }
  return out;
}

TrainResult run_phase1(const RunConfig& config, AttributeId attribute, std::span<const Sequence> data,
                       std::ostream& log) {
  const std::string name(attribute_name(attribute));
  const auto subset = branch_training_set(data, attribute);
  if (subset.empty()) throw DataError("no training sequences carry the tags of branch " + name);
  const RunConfig view = phase1_view(config);
  auto model = ModelParams<float>::init(config.network, Variant::Sum, subset.size(), config.model_seed());
  if (!config.pretrained.empty()) {
    const auto n = load_pretrained_backbone(config.pretrained, model);
    log << "loaded " << n << " backbone arrays from " << config.pretrained.string() << '\n';
  }
  TrainConfig tc = config.train;
  tc.seed = config.train_seed("phase1/" + name);
  tc.config_hash = view.hash();
  log << "phase 1 " << name << ": " << subset.size() << " sequences, " << tc.total_iterations() << " iterations\n";
  return train_phase1(attribute, subset, std::move(model), tc,
                      progress_logger(log, "phase 1 " + name, tc.total_iterations()));
}

TrainResult run_phase2(const RunConfig& config, std::span<const Sequence> data, std::span<const Checkpoint> branches,
                       std::ostream& log) {
  TrainConfig tc = config.train;
  tc.seed = config.train_seed("phase2/" + std::string(variant_name(config.variant)));
  tc.config_hash = config.hash();
  log << "phase 2 " << variant_name(config.variant) << ": " << data.size() << " sequences, " << tc.total_iterations()
      << " iterations\n";
  return train_phase2(data, branches, config.variant, config.plain_mode, tc,
                      progress_logger(log, "phase 2", tc.total_iterations()));
}

std::vector<std::vector<BoundingBox>> run_tracking(const RunConfig& config, const ModelParams<float>& model,
                                                   std::span<const Sequence> data, const fs::path& results_dir,
                                                   std::ostream& log) {
  std::vector<std::vector<BoundingBox>> all;
  for (const auto& seq : data) {
    TrackerConfig tc = config.tracker;
    tc.seed = config.track_seed(seq.name);
    all.push_back(track_sequence(seq, model, tc));
    write_results(results_dir / (seq.name + ".txt"), all.back());
    log << "tracked " << seq.name << " (" << seq.size() << " frames)\n";
  }
  return all;
}

std::string format_ablation_table(const EvalReport& sum, const EvalReport& agg_esk) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string("n/a");
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return std::string(buf);
  };
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-8s %-12s %s\n", "Metric", "Var-AggESK", "Proposed Method");
  out << line;
  std::snprintf(line, sizeof(line), "%-8s %-12s %s\n", "PR", cell(sum.all.pr).c_str(), cell(agg_esk.all.pr).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-8s %-12s %s\n", "SR", cell(sum.all.sr).c_str(), cell(agg_esk.all.sr).c_str());
  out << line;
  return out.str();
}

AblationResult run_ablation(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const OutputLayout layout{out_dir};
  layout.prepare(layout.root, config);
  layout.prepare(layout.checkpoints(), config);
  layout.prepare(layout.reports(), config);
  const auto data = load_run_data(config);

  const std::string phase1_hash = phase1_view(config).hash();
  std::vector<Checkpoint> branches;
  for (auto a : kAllAttributes) {
    const auto path = phase1_path(layout, a);
    if (auto ck = reusable(path, phase1_hash, log)) {
      branches.push_back(std::move(*ck));
      continue;
    }
    auto r = run_phase1(config, a, data, log);
    save_checkpoint(r.checkpoint, path);
    write_loss_trace(layout.reports() / ("phase1_" + std::string(attribute_name(a)) + "_loss.csv"), r.loss_trace);
    branches.push_back(std::move(r.checkpoint));
  }

  AblationResult result;
  for (Variant v : {Variant::Sum, Variant::AggEsk}) {
    RunConfig vc = config;
    vc.variant = v;
    vc.train.config_hash = vc.hash();
    const auto path = phase2_path(layout, v);
    Checkpoint ck;
    if (auto existing = reusable(path, vc.hash(), log)) {
      ck = std::move(*existing);
    } else {
      auto r = run_phase2(vc, data, branches, log);
      save_checkpoint(r.checkpoint, path);
      write_loss_trace(layout.reports() / ("phase2_" + std::string(variant_name(v)) + "_loss.csv"), r.loss_trace);
      ck = std::move(r.checkpoint);
    }
    const auto results_dir = layout.results() / std::string(variant_name(v));
    layout.prepare(results_dir, vc);
    const auto boxes = run_tracking(vc, ck.model, data, results_dir, log);
    const bool full = v == Variant::AggEsk;
    EvalReport report = evaluate(data, boxes, full ? "Proposed Method" : "Var-AggESK");
    write_report(layout.reports(), "ablation_" + std::string(variant_name(v)), report);
    (full ? result.agg_esk : result.sum) = std::move(report);
    (full ? result.agg_esk_parameters : result.sum_parameters) = ck.parameter_count();
  }
  result.table = format_ablation_table(result.sum, result.agg_esk);
  std::ostringstream counts;
  counts << "parameters: Var-AggESK " << result.sum_parameters << ", Proposed Method " << result.agg_esk_parameters
         << '\n';
  write_text(layout.reports() / "ablation.txt", result.table + counts.str());
  layout.prepare(layout.curves(), config);
  const std::vector<EvalReport> both{result.sum, result.agg_esk};
  emit_curves(both, layout.curves(), CurveFormat::Csv);
  return result;
}

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config_file, "key=value config file ('#' starts a comment)");
  sub->add_option("--set", c.sets, "override one config key (key=value); repeatable");
  sub->add_option("--seed", c.seed, "master seed; every random stream derives from it");
  sub->add_option("--data", c.data, std::string("dataset root (default: $") + kDataRootEnv + ")");
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
}

RunConfig build_config(const Common& c, std::ostream& log) {
  std::vector<std::string> overrides = c.sets;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (!c.data.empty()) overrides.push_back("data.root=" + c.data);
  RunConfig cfg = load_run_config(c.config_file, overrides);
  log << "# resolved configuration (hash " << cfg.hash() << ")\n" << cfg.echo();
  return cfg;
}

ModelParams<float> tracking_model(const RunConfig& cfg, const OutputLayout& layout, const std::string& explicit_path,
                                  std::ostream& log) {
  if (!explicit_path.empty()) {
    log << "loading " << explicit_path << '\n';
    return load_checkpoint(explicit_path).model;
  }
  const auto path = phase2_path(layout, cfg.variant);
  if (fs::exists(path)) {
    log << "loading " << path.string() << '\n';
    return load_checkpoint(path).model;
  }
  log << "warning: no checkpoint found; tracking with a randomly initialized network\n";
  auto m = ModelParams<float>::init(cfg.network, cfg.variant, 1, cfg.model_seed());
  m.plain_mode = cfg.plain_mode;
  return m;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"RGB-T tracker with attribute-specific fusion branches", "eanet"};
  app.require_subcommand(1, 1);

  Common common;
  std::string attribute, branches_dir, checkpoint, results_dir, name, format = "png";
  std::vector<std::string> sequences, runs;

  auto* synth = app.add_subcommand("synth", "write the synthetic RGB-T suite as a dataset root under --out");
  add_common(synth, common);
  auto* p1 = app.add_subcommand("train-phase1", "train one attribute branch");
  add_common(p1, common);
  p1->add_option("--attribute", attribute, "branch: TC, IV, SV, OCC or FM")->required();
  auto* p2 = app.add_subcommand("train-phase2", "train the aggregation modules and FC layers");
  add_common(p2, common);
  p2->add_option("--branches", branches_dir, "folder with phase1_<ATTR>.ckpt (default: <out>/checkpoints)");
  auto* track = app.add_subcommand("track", "run the online tracker and write results/<sequence>.txt");
  add_common(track, common);
  track->add_option("--checkpoint", checkpoint, "model checkpoint (default: <out>/checkpoints/phase2_<variant>.ckpt)");
  track->add_option("--sequence", sequences, "restrict to these sequences; repeatable");
  auto* eval = app.add_subcommand("eval", "score result files against ground truth");
  add_common(eval, common);
  eval->add_option("--results", results_dir, "result folder (default: <out>/results)");
  eval->add_option("--name", name, "tracker label (default: eanet-<variant>)");
  auto* plot = app.add_subcommand("plot", "draw precision and success curves for one or more result folders");
  add_common(plot, common);
  plot->add_option("--run", runs, "NAME=RESULTS_DIR; repeatable")->required();
  plot->add_option("--format", format, "png or csv");
  auto* ablate = app.add_subcommand("ablate", "compare the full model with the aggregation-free variant");
  add_common(ablate, common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    RunConfig cfg = build_config(common, err);
    const OutputLayout layout{common.out};

    if (synth->parsed()) {
      layout.prepare(layout.root, cfg);
      for (const auto& spec : default_synthetic_suite(cfg.synth_frames)) {
        write_sequence(synth_sequence(spec, cfg.derived_seed("synth/" + spec.name)), layout.root);
      }
      out << "wrote synthetic suite to " << layout.root.string() << '\n';
      return kExitOk;
    }

    if (p1->parsed()) {
      const auto a = parse_attribute(attribute);
      if (!a) throw ConfigError("unknown attribute '" + attribute + "' (expected TC, IV, SV, OCC or FM)");
      const auto data = load_run_data(cfg);
      layout.prepare(layout.checkpoints(), cfg);
      layout.prepare(layout.reports(), cfg);
      auto r = run_phase1(cfg, *a, data, err);
      save_checkpoint(r.checkpoint, phase1_path(layout, *a));
      write_loss_trace(layout.reports() / ("phase1_" + attribute + "_loss.csv"), r.loss_trace);
      out << "wrote " << phase1_path(layout, *a).string() << '\n';
      return kExitOk;
    }

    if (p2->parsed()) {
      const auto data = load_run_data(cfg);
      const auto branches = load_branches(branches_dir.empty() ? layout.checkpoints() : fs::path(branches_dir));
      layout.prepare(layout.checkpoints(), cfg);
      layout.prepare(layout.reports(), cfg);
      auto r = run_phase2(cfg, data, branches, err);
      save_checkpoint(r.checkpoint, phase2_path(layout, cfg.variant));
      write_loss_trace(layout.reports() / ("phase2_" + std::string(variant_name(cfg.variant)) + "_loss.csv"),
                       r.loss_trace);
      out << "wrote " << phase2_path(layout, cfg.variant).string() << '\n';
      return kExitOk;
    }

    if (track->parsed()) {
      auto data = load_run_data(cfg);
      if (!sequences.empty()) {
        for (const auto& s : sequences) {
          if (std::none_of(data.begin(), data.end(), [&](const Sequence& q) { return q.name == s; })) {
            throw DataError("unknown sequence '" + s + "'");
          }
        }
        std::erase_if(data, [&](const Sequence& q) {
          return std::find(sequences.begin(), sequences.end(), q.name) == sequences.end();
        });
      }
      const auto model = tracking_model(cfg, layout, checkpoint, err);
      layout.prepare(layout.results(), cfg);
      run_tracking(cfg, model, data, layout.results(), err);
      out << "wrote " << data.size() << " result files to " << layout.results().string() << '\n';
      return kExitOk;
    }

    if (eval->parsed()) {
      const auto data = load_run_data(cfg);
      const fs::path dir = results_dir.empty() ? layout.results() : fs::path(results_dir);
      const std::string label = name.empty() ? "eanet-" + std::string(variant_name(cfg.variant)) : name;
      const auto report = evaluate_directory(dir, data, label);
      layout.prepare(layout.reports(), cfg);
      layout.prepare(layout.curves(), cfg);
      write_report(layout.reports(), "report", report);
      emit_curves(std::span<const EvalReport>(&report, 1), layout.curves(), CurveFormat::Csv);
      out << format_report_table(report);
      return kExitOk;
    }

    if (plot->parsed()) {
      const auto fmt = parse_curve_format(format);
      if (!fmt) throw ConfigError("unknown curve format '" + format + "' (expected png or csv)");
      const auto data = load_run_data(cfg);
      std::vector<EvalReport> reports;
      for (const auto& r : runs) {
        const auto eq = r.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--run expects NAME=RESULTS_DIR, got '" + r + "'");
        reports.push_back(evaluate_directory(r.substr(eq + 1), data, r.substr(0, eq)));
      }
      layout.prepare(layout.curves(), cfg);
      for (const auto& p : emit_curves(reports, layout.curves(), *fmt)) out << "wrote " << p.string() << '\n';
      return kExitOk;
    }

    if (ablate->parsed()) {
      const auto r = run_ablation(cfg, layout.root, err);
      out << r.table << "parameters: Var-AggESK " << r.sum_parameters << ", Proposed Method " << r.agg_esk_parameters
          << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const SamplingBudgetExhausted& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace eanet
