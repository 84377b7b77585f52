#pragma once

// End-to-end pipeline: sequences -> windows -> sample vectors -> MLP, plus
// dataset handling and evaluation reports.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "har/action.hpp"
#include "har/bgmodel.hpp"
#include "har/config.hpp"
#include "har/flowdesc.hpp"
#include "har/frame.hpp"
#include "har/mlp.hpp"

namespace har {

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results keep index
/// order.
template <typename Fn>
auto parallel_map(std::size_t n, int threads, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t worker, std::size_t workers) {
    for (std::size_t i = worker; i < n; i += workers) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(threads), n));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
    for (auto& t : pool) t.join();
  }
  std::vector<R> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

/// First frame of every window that fits in `frame_count` frames.
inline std::vector<int> window_starts(int frame_count, int window_frames, int stride) {
  std::vector<int> starts;
  for (int s = 0; s + window_frames <= frame_count; s += stride) starts.push_back(s);
  return starts;
}

struct SequenceDiagnostics {
  std::vector<ForegroundMask> masks;
  std::vector<WindowTrace> windows;
};

/// One sample vector per window of the sequence.
inline std::vector<SampleVector> sequence_samples(std::span<const Frame> frames, const PipelineConfig& cfg,
                                                  SequenceDiagnostics* diag = nullptr) {
  const auto starts = window_starts(static_cast<int>(frames.size()), cfg.window_frames, cfg.effective_stride());
  std::vector<ForegroundMask> masks;
  if (cfg.foreground_gating || diag) {
    BackgroundModel bg(frames.front().width, frames.front().height, cfg.background);
    for (const auto& f : frames) masks.push_back(bg.update_and_classify(f));
  }
  const DescriptorParams dp = cfg.descriptor_params();
  std::vector<SampleVector> out;
  for (int s : starts) {
    WindowTrace trace;
    const ForegroundMask* gate = cfg.foreground_gating ? &masks[static_cast<std::size_t>(s)] : nullptr;
    out.push_back(aggregate_sample(frames.subspan(static_cast<std::size_t>(s), static_cast<std::size_t>(cfg.window_frames)),
                                   dp, gate, diag ? &trace : nullptr));
    if (diag) diag->windows.push_back(std::move(trace));
  }
  if (diag) diag->masks = std::move(masks);
  return out;
}

struct SequenceEntry {
  ActionLabel label;
  std::filesystem::path path;
};

/// Lists `<dir>/<class>/<sequence>/` for all four classes. Every class
/// directory must exist.
inline std::vector<SequenceEntry> list_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  std::vector<SequenceEntry> out;
  for (ActionLabel label : kAllActions) {
    const fs::path class_dir = dir / std::string(name_of(label));
    if (!fs::is_directory(class_dir))
      throw DataError("dataset is missing class directory '" + std::string(name_of(label)) + "/' in " + dir.string());
    std::vector<fs::path> seqs;
    for (const auto& e : fs::directory_iterator(class_dir))
      if (e.is_directory()) seqs.push_back(e.path());
    std::sort(seqs.begin(), seqs.end());
    for (auto& p : seqs) out.push_back({label, std::move(p)});
  }
  return out;
}

struct LabeledSamples {
  ActionLabel label;
  std::vector<SampleVector> windows;
};

inline std::vector<LabeledSamples> extract_dataset(std::span<const SequenceEntry> entries, const PipelineConfig& cfg) {
  return parallel_map(entries.size(), cfg.threads, [&](std::size_t i) {
    const auto frames = load_sequence_dir(entries[i].path, cfg.working_resolution);
    LabeledSamples ls{entries[i].label, sequence_samples(frames, cfg)};
    for (auto& w : ls.windows) w.label = entries[i].label;
    return ls;
  });
}

struct TrainingReport {
  std::array<int, kNumActions> sequences_per_class{};
  std::array<int, kNumActions> samples_per_class{};
  int total_samples = 0;
  double final_loss = 0.0;
  int epochs = 0;

  void print(std::ostream& os) const {
    os << "class      sequences  samples\n";
    for (ActionLabel a : kAllActions) {
      char line[64];
      std::snprintf(line, sizeof line, "%-10s %9d %8d\n", display_name(a).c_str(),
                    sequences_per_class[static_cast<std::size_t>(index_of(a))],
                    samples_per_class[static_cast<std::size_t>(index_of(a))]);
      os << line;
    }
    os << "total samples: " << total_samples << '\n';
    os << "epochs: " << epochs << '\n';
    os << "final loss: " << detail::format_double(final_loss) << '\n';
  }
};

struct TrainedClassifier {
  MlpModel model;
  TrainingReport report;
  std::vector<double> loss_trace;
};

/// Builds a [12N, hidden, 4] network, standardizes on the data, and trains.
inline TrainedClassifier train_classifier(std::span<const LabeledSamples> data, const PipelineConfig& cfg) {
  TrainedClassifier out;
  std::vector<TrainingSample> samples;
  for (const auto& seq : data) {
    const auto c = static_cast<std::size_t>(index_of(seq.label));
    ++out.report.sequences_per_class[c];
    for (const auto& w : seq.windows) {
      samples.push_back({w.values, seq.label});
      ++out.report.samples_per_class[c];
    }
  }
  out.report.total_samples = static_cast<int>(samples.size());
  if (samples.empty()) throw DataError("training set yields zero samples");
  for (ActionLabel a : kAllActions)
    if (out.report.samples_per_class[static_cast<std::size_t>(index_of(a))] == 0)
      throw DataError("training set has no samples for class " + std::string(name_of(a)));

  const int dim = cfg.feature_size * kDescriptorSize;
  MlpModel model({dim, cfg.hidden_nodes, kNumActions}, cfg.activation_a, cfg.activation_beta);
  model.initialize(cfg.seed);
  fit_standardization(model, samples, kDescriptorSize, cfg.min_input_spread);
  TrainParams tp;
  tp.epochs = cfg.epochs;
  tp.rprop = cfg.rprop;
  TrainResult r = train(std::move(model), samples, tp);
  out.model = std::move(r.model);
  out.loss_trace = std::move(r.loss_trace);
  out.report.epochs = cfg.epochs;
  out.report.final_loss = batch_loss(out.model, samples);
  return out;
}

inline TrainedClassifier train_from_directory(const std::filesystem::path& dir, const PipelineConfig& cfg) {
  const auto entries = list_dataset(dir);
  const auto data = extract_dataset(entries, cfg);
  return train_classifier(data, cfg);
}

struct WindowPrediction {
  int start_frame = 0;
  Prediction prediction;
};

class SequenceTooShortError : public DataError {
public:
  using DataError::DataError;
};

inline void check_model_matches(const MlpModel& m, const PipelineConfig& cfg) {
  if (m.input_size() != cfg.feature_size * kDescriptorSize)
    throw DataError("model expects " + std::to_string(m.input_size()) + " inputs but feature_size " +
                    std::to_string(cfg.feature_size) + " yields " + std::to_string(cfg.feature_size * kDescriptorSize));
  if (m.output_size() != kNumActions) throw DataError("model does not have 4 outputs");
}

inline std::vector<WindowPrediction> classify_sequence(std::span<const Frame> frames, const MlpModel& m,
                                                       const PipelineConfig& cfg,
                                                       SequenceDiagnostics* diag = nullptr) {
  if (static_cast<int>(frames.size()) < cfg.window_frames)
    throw SequenceTooShortError("sequence has " + std::to_string(frames.size()) + " frames, fewer than one window (" +
                                std::to_string(cfg.window_frames) + ")");
  check_model_matches(m, cfg);
  const auto starts = window_starts(static_cast<int>(frames.size()), cfg.window_frames, cfg.effective_stride());
  const auto samples = sequence_samples(frames, cfg, diag);
  std::vector<WindowPrediction> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back({starts[i], predict(m, samples[i].values)});
  return out;
}

/// Majority vote; among tied classes the earliest window's prediction wins.
inline ActionLabel vote(std::span<const ActionLabel> window_labels) {
  if (window_labels.empty()) throw std::invalid_argument("vote: no windows");
  std::array<int, kNumActions> counts{};
  for (auto l : window_labels) ++counts[static_cast<std::size_t>(index_of(l))];
  const int best = *std::max_element(counts.begin(), counts.end());
  for (auto l : window_labels)
    if (counts[static_cast<std::size_t>(index_of(l))] == best) return l;
  return window_labels.front();
}

struct ConfusionMatrix {
  /// counts[true][predicted]
  std::array<std::array<int, kNumActions>, kNumActions> counts{};

  void add(ActionLabel truth, ActionLabel predicted) {
    ++counts[static_cast<std::size_t>(index_of(truth))][static_cast<std::size_t>(index_of(predicted))];
  }
  int row_sum(int r) const {
    int s = 0;
    for (int c : counts[static_cast<std::size_t>(r)]) s += c;
    return s;
  }
  int total() const {
    int s = 0;
    for (int r = 0; r < kNumActions; ++r) s += row_sum(r);
    return s;
  }
  int trace() const {
    int s = 0;
    for (int r = 0; r < kNumActions; ++r) s += counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)];
    return s;
  }
};

struct EvaluationReport {
  ConfusionMatrix matrix;
  /// Percent; NaN-free: classes without test sequences report 0.
  std::array<double, kNumActions> recognition_rate{};
  double overall_accuracy = 0.0;

  static EvaluationReport from_matrix(const ConfusionMatrix& m) {
    EvaluationReport r;
    r.matrix = m;
    for (int c = 0; c < kNumActions; ++c) {
      const int rs = m.row_sum(c);
      r.recognition_rate[static_cast<std::size_t>(c)] =
          rs > 0 ? 100.0 * m.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)] / rs : 0.0;
    }
    const int total = m.total();
    r.overall_accuracy = total > 0 ? 100.0 * m.trace() / total : 0.0;
    return r;
  }

  /// Fixed-width table followed by a CSV copy.
  void print(std::ostream& os) const {
    char buf[128];
    os << "Confusion matrix (rows: true class, columns: predicted class)\n";
    std::snprintf(buf, sizeof buf, "%-10s", "");
    os << buf;
    for (ActionLabel a : kAllActions) {
      std::snprintf(buf, sizeof buf, "%10s", display_name(a).c_str());
      os << buf;
    }
    os << '\n';
    for (ActionLabel t : kAllActions) {
      std::snprintf(buf, sizeof buf, "%-10s", display_name(t).c_str());
      os << buf;
      for (ActionLabel p : kAllActions) {
        std::snprintf(buf, sizeof buf, "%10d",
                      matrix.counts[static_cast<std::size_t>(index_of(t))][static_cast<std::size_t>(index_of(p))]);
        os << buf;
      }
      os << '\n';
    }
    os << "\nRecognition rate (%)\n";
    for (ActionLabel a : kAllActions) {
      std::snprintf(buf, sizeof buf, "%-10s%10.1f\n", display_name(a).c_str(),
                    recognition_rate[static_cast<std::size_t>(index_of(a))]);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "\nOverall accuracy: %.1f%% (%d/%d)\n", overall_accuracy, matrix.trace(),
                  matrix.total());
    os << buf;

    os << "\n# csv\ntrue/predicted";
    for (ActionLabel a : kAllActions) os << ',' << display_name(a);
    os << ",rate\n";
    for (ActionLabel t : kAllActions) {
      os << display_name(t);
      for (ActionLabel p : kAllActions)
        os << ',' << matrix.counts[static_cast<std::size_t>(index_of(t))][static_cast<std::size_t>(index_of(p))];
      std::snprintf(buf, sizeof buf, ",%.1f\n", recognition_rate[static_cast<std::size_t>(index_of(t))]);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "overall,%.1f\n", overall_accuracy);
    os << buf;
  }

  std::string to_string() const {
    std::ostringstream os;
    print(os);
    return os.str();
  }
};

struct SequenceVerdict {
  SequenceEntry entry;
  std::vector<WindowPrediction> windows;
  ActionLabel predicted = ActionLabel::Boxing;
};

inline EvaluationReport evaluate_directory(const std::filesystem::path& dir, const MlpModel& m,
                                           const PipelineConfig& cfg, std::vector<SequenceVerdict>* verdicts = nullptr) {
  const auto entries = list_dataset(dir);
  if (entries.empty()) throw DataError("test set is empty: " + dir.string());
  check_model_matches(m, cfg);
  auto results = parallel_map(entries.size(), cfg.threads, [&](std::size_t i) {
    const auto frames = load_sequence_dir(entries[i].path, cfg.working_resolution);
    SequenceVerdict v{entries[i], classify_sequence(frames, m, cfg), ActionLabel::Boxing};
    std::vector<ActionLabel> labels;
    for (const auto& w : v.windows) labels.push_back(w.prediction.label);
    v.predicted = vote(labels);
    return v;
  });
  ConfusionMatrix cm;
  for (const auto& v : results) cm.add(v.entry.label, v.predicted);
  if (verdicts) *verdicts = std::move(results);
  return EvaluationReport::from_matrix(cm);
}

struct SweepResult {
  std::vector<int> values;
  std::vector<EvaluationReport> reports;

  /// Class x feature-size recognition-rate table, plus overall accuracy.
  void print(std::ostream& os) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", "Class");
    os << buf;
    for (int v : values) {
      std::snprintf(buf, sizeof buf, "%8s%-4d", "N=", v);
      os << buf;
    }
    os << '\n';
    auto row = [&](const std::string& name, auto&& value_of) {
      std::snprintf(buf, sizeof buf, "%-10s", name.c_str());
      os << buf;
      for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%12.1f", value_of(r));
        os << buf;
      }
      os << '\n';
    };
    for (ActionLabel a : kAllActions)
      row(display_name(a), [a](const EvaluationReport& r) { return r.recognition_rate[static_cast<std::size_t>(index_of(a))]; });
    row("Overall", [](const EvaluationReport& r) { return r.overall_accuracy; });

    os << "\n# csv\nclass";
    for (int v : values) os << ",N=" << v;
    os << '\n';
    for (ActionLabel a : kAllActions) {
      os << display_name(a);
      for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, ",%.1f", r.recognition_rate[static_cast<std::size_t>(index_of(a))]);
        os << buf;
      }
      os << '\n';
    }
    os << "overall";
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof buf, ",%.1f", r.overall_accuracy);
      os << buf;
    }
    os << '\n';
  }
};

/// Retrains and evaluates for each feature size on `<dir>/train` and
/// `<dir>/test`.
inline SweepResult sweep_feature_size(const std::filesystem::path& dir, const PipelineConfig& base,
                                      std::span<const int> values) {
  if (values.size() < 2) throw std::invalid_argument("sweep needs at least two values");
  SweepResult out;
  for (int n : values) {
    PipelineConfig cfg = base;
    cfg.feature_size = n;
    cfg.validate();
    const TrainedClassifier tc = train_from_directory(dir / "train", cfg);
    out.values.push_back(n);
    out.reports.push_back(evaluate_directory(dir / "test", tc.model, cfg));
  }
  return out;
}

}  // namespace har
