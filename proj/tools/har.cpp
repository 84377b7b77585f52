// har: train, classify, evaluate, synthesize, and sweep from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "har/config.hpp"
#include "har/pipeline.hpp"
#include "har/synth.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  int stride = 0;

  har::PipelineConfig load() const {
    har::PipelineConfig cfg;
    if (!config_file.empty()) har::apply_config_file(cfg, config_file);
    for (const auto& o : overrides) har::apply_override(cfg, o);
    if (stride > 0) cfg.stride = stride;
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides, "Override a config key (key=value), repeatable");
}

void dump_diagnostics(const har::SequenceDiagnostics& diag, const std::string& masks_dir,
                      const std::string& features_dir, const std::string& flow_dir) {
  char name[64];
  if (!masks_dir.empty()) {
    fs::create_directories(masks_dir);
    for (std::size_t i = 0; i < diag.masks.size(); ++i) {
      std::snprintf(name, sizeof name, "mask_%04zu.pgm", i);
      har::write_pgm(fs::path(masks_dir) / name, diag.masks[i].to_frame(static_cast<int>(i)));
    }
  }
  if (!features_dir.empty()) {
    fs::create_directories(features_dir);
    for (const auto& w : diag.windows) {
      std::snprintf(name, sizeof name, "features_%04d.txt", w.first_frame);
      std::ofstream os(fs::path(features_dir) / name);
      for (const auto& f : w.features)
        os << w.first_frame << ' ' << f.x << ' ' << f.y << ' ' << har::detail::format_double(f.score) << '\n';
    }
  }
  if (!flow_dir.empty()) {
    fs::create_directories(flow_dir);
    for (const auto& w : diag.windows) {
      for (const auto& s : w.steps) {
        std::snprintf(name, sizeof name, "flow_%04d.txt", s.from_frame);
        std::ofstream os(fs::path(flow_dir) / name);
        const int step = s.to_frame - s.from_frame;
        for (std::size_t i = 0; i < s.results.size(); ++i) {
          const auto& r = s.results[i];
          const double u = r.tracked() ? r.dx / step : 0.0;
          const double v = r.tracked() ? r.dy / step : 0.0;
          os << s.from_frame << ' ' << s.points[i].x << ' ' << s.points[i].y << ' ' << u << ' ' << v << ' '
             << har::to_string(r.status) << ' ' << r.residual << '\n';
        }
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human action recognition from grayscale frame sequences"};
  app.require_subcommand(1);

  CommonOptions train_opts, classify_opts, eval_opts, sweep_opts;

  auto* train_cmd = app.add_subcommand("train", "Train a model on <dataset>/{boxing,clapping,running,walking}/<seq>/");
  std::string train_dir, model_out;
  train_cmd->add_option("dataset", train_dir, "Dataset directory")->required();
  train_cmd->add_option("-o,--model", model_out, "Output model file")->required();
  add_common(train_cmd, train_opts);

  auto* classify_cmd = app.add_subcommand("classify", "Classify each window of a frame sequence");
  std::string sequence, classify_model, raw_format, dump_masks, dump_features, dump_flow;
  classify_cmd->add_option("sequence", sequence, "Directory of PNM frames, or a raw stream with --raw")->required();
  classify_cmd->add_option("-m,--model", classify_model, "Model file")->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--raw", raw_format, "Raw 8-bit stream layout WxH[:rgb]");
  classify_cmd->add_option("--stride", classify_opts.stride, "Window stride in frames (default: window length)");
  classify_cmd->add_option("--dump-masks", dump_masks, "Write foreground masks as PGM");
  classify_cmd->add_option("--dump-features", dump_features, "Write detected features per window");
  classify_cmd->add_option("--dump-flow", dump_flow, "Write tracked flow per frame pair");
  add_common(classify_cmd, classify_opts);

  auto* eval_cmd = app.add_subcommand("evaluate", "Confusion matrix and recognition rates on a test set");
  std::string test_dir, eval_model;
  eval_cmd->add_option("test_dir", test_dir, "Test directory (same layout as training)")->required();
  eval_cmd->add_option("-m,--model", eval_model, "Model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--stride", eval_opts.stride, "Window stride in frames (default: window length)");
  add_common(eval_cmd, eval_opts);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic four-class corpus");
  std::string synth_dir;
  har::SynthParams synth_params;
  synth_cmd->add_option("out_dir", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_params.seed, "Generator seed");
  synth_cmd->add_option("--train-per-class", synth_params.train_per_class)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--test-per-class", synth_params.test_per_class)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--frames", synth_params.frames)->check(CLI::PositiveNumber);

  auto* sweep_cmd = app.add_subcommand("sweep", "Retrain and evaluate over feature sizes on <dataset>/{train,test}");
  std::string sweep_dir, sweep_param = "feature_size";
  std::vector<int> sweep_values;
  sweep_cmd->add_option("dataset", sweep_dir, "Directory holding train/ and test/")->required();
  sweep_cmd->add_option("--param", sweep_param, "Swept parameter")->check(CLI::IsMember({"feature_size"}));
  sweep_cmd->add_option("--values", sweep_values, "Values to sweep (at least two)")->required()->delimiter(',');
  add_common(sweep_cmd, sweep_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) {
      const auto cfg = train_opts.load();
      std::cerr << "extracting samples from " << train_dir << '\n';
      const auto trained = har::train_from_directory(train_dir, cfg);
      har::save_model(fs::path(model_out), trained.model);
      trained.report.print(std::cout);
    } else if (*classify_cmd) {
      const auto cfg = classify_opts.load();
      const auto model = har::load_model(fs::path(classify_model));
      std::vector<har::Frame> frames;
      if (!raw_format.empty()) {
        har::RawFormat fmt;
        try {
          fmt = har::parse_raw_format(raw_format);
        } catch (const std::invalid_argument& e) {
          std::cerr << "error: --raw: " << e.what() << '\n';
          return kExitUsage;
        }
        frames = har::load_sequence_raw(fs::path(sequence), fmt, cfg.working_resolution);
      } else {
        frames = har::load_sequence_dir(sequence, cfg.working_resolution);
      }
      const bool dumping = !dump_masks.empty() || !dump_features.empty() || !dump_flow.empty();
      har::SequenceDiagnostics diag;
      const auto windows = har::classify_sequence(frames, model, cfg, dumping ? &diag : nullptr);
      for (const auto& w : windows) {
        std::cout << w.start_frame << ' ' << har::name_of(w.prediction.label);
        for (double s : w.prediction.scores) std::cout << ' ' << har::detail::format_double(s);
        std::cout << '\n';
      }
      if (dumping) dump_diagnostics(diag, dump_masks, dump_features, dump_flow);
    } else if (*eval_cmd) {
      const auto cfg = eval_opts.load();
      const auto model = har::load_model(fs::path(eval_model));
      har::evaluate_directory(test_dir, model, cfg).print(std::cout);
    } else if (*synth_cmd) {
      har::write_synthetic_corpus(synth_dir, synth_params);
      std::cout << "wrote " << har::kNumActions << " classes x (" << synth_params.train_per_class << " train + "
                << synth_params.test_per_class << " test) sequences x " << synth_params.frames << " frames to "
                << synth_dir << '\n';
    } else if (*sweep_cmd) {
      const auto cfg = sweep_opts.load();
      if (sweep_values.size() < 2) {
        std::cerr << "error: sweep needs at least two values\n";
        return kExitUsage;
      }
      har::sweep_feature_size(sweep_dir, cfg, sweep_values).print(std::cout);
    }
  } catch (const har::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const har::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
