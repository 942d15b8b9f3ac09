#include "commands.hpp"

#include "knnclean/config.hpp"
#include "knnclean/embedstore.hpp"
#include "knnclean/noise.hpp"
#include "knnclean/pipeline.hpp"
#include "knnclean/report.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace knnclean {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct SynthArgs {
  std::uint32_t classes = 10;
  std::size_t per_class = 1000;
  std::size_t dim = 32;
  double separation = 8.0;
  std::uint64_t seed = 1;
  std::string out;
  std::size_t test_per_class = 0;
  std::string test_out;
};

struct CorruptArgs {
  std::string in;
  std::string out;
  std::string kind = "symmetric";
  double level = 0.0;
  std::string transitions;
  std::uint64_t seed = 0;
};

struct RunArgs {
  std::string config;
  std::string train;
  std::string test;
  std::string report_dir;
};

struct EvaluateArgs {
  std::string config;
  std::string train;
  std::string test;
  std::string out;
};

struct SweepArgs {
  std::string config;
  std::string train;
  std::vector<std::size_t> k_values = {5, 20, 50, 100, 200, 500, 1000};
  std::size_t interval = 10;
  std::string out;
};

struct InspectArgs {
  std::string in;
  std::string json_out;
};

PipelineConfig resolve_config(const std::string& path, std::ostream& out) {
  PipelineConfig config = path.empty() ? PipelineConfig{} : load_config(path);
  config.validate();
  out << "resolved config:\n" << to_json(config).dump(2) << "\n";
  return config;
}

int do_synth(const SynthArgs& a, std::ostream& out) {
  if (a.test_per_class > 0 && a.test_out.empty()) {
    throw ConfigError("--test-per-class needs --test-out");
  }
  const auto data = synth_gaussian(a.classes, a.per_class + a.test_per_class, a.dim, a.separation, a.seed);
  if (a.test_per_class > 0) {
    const auto [train, test] = split_per_class(data, a.test_per_class);
    save_dataset(train, a.out);
    save_dataset(test, a.test_out);
    out << "wrote " << a.out << " (n=" << train.size() << ") and " << a.test_out
        << " (n=" << test.size() << ")\n";
  } else {
    save_dataset(data, a.out);
    out << "wrote " << a.out << " (n=" << data.size() << ", d=" << data.dim() << ", C=" << data.num_classes
        << ")\n";
  }
  return kExitOk;
}

int do_corrupt(const CorruptArgs& a, std::ostream& out) {
  NoiseSpec spec;
  spec.kind = parse_noise_kind(a.kind);
  spec.level = a.level;
  spec.seed = a.seed;
  if (!a.transitions.empty()) spec.transitions = parse_transitions(a.transitions);
  spec.validate();

  LabeledDataset data = load_dataset(a.in);
  const LabelVector before = data.noisy_labels;
  data.noisy_labels = inject(data.noisy_labels, data.num_classes, spec);
  data.current_labels = data.noisy_labels;
  save_dataset(data, a.out);
  out << "corrupted " << label_error_rate(before, data.noisy_labels) * 100.0 << "% of labels ("
      << to_string(spec.kind) << ", level " << spec.level << ")\n";
  if (data.true_labels) {
    out << "noisy label error rate vs truth: " << label_error_rate(data.noisy_labels, *data.true_labels)
        << "\n";
  }
  return kExitOk;
}

void print_episode(std::ostream& out, const EpisodeReport& r) {
  out << "episode " << r.episode << ": gamma=" << format_real(r.gamma);
  if (r.m_percent) out << " M%=" << *r.m_percent;
  out << " train_acc=" << r.train_accuracy << " changed=" << r.labels_changed;
  if (r.label_recovery_rate) out << " recovery=" << *r.label_recovery_rate;
  if (r.test_accuracy_head) out << " test_head=" << *r.test_accuracy_head;
  if (r.test_accuracy_deep_knn) out << " test_deep_knn=" << *r.test_accuracy_deep_knn;
  out << " (" << r.wall_seconds << " s)\n";
}

int do_run(const RunArgs& a, std::ostream& out) {
  const PipelineConfig config = resolve_config(a.config, out);
  LabeledDataset train = load_dataset(a.train);
  std::optional<LabeledDataset> test;
  if (!a.test.empty()) test = load_dataset(a.test);
  fs::create_directories(a.report_dir);
  const fs::path dir(a.report_dir);

  RunOptions options;
  options.on_episode = [&](const EpisodeReport& r) { print_episode(out, r); };
  try {
    const RunResult result = run(config, std::move(train), test, options);
    write_episode_csv(dir / "episodes.csv", result.reports);
    write_text(dir / "summary.json", run_summary(config, result.reports, &result.final_metrics).dump(2) + "\n");
    save_dataset(result.corrected, dir / "corrected.emb");
    out << "final: train_acc=" << result.final_metrics.train_accuracy;
    if (result.final_metrics.label_recovery_rate) {
      out << " recovery=" << *result.final_metrics.label_recovery_rate;
    }
    if (result.final_metrics.test_accuracy_head) {
      out << " test_head=" << *result.final_metrics.test_accuracy_head
          << " test_deep_knn=" << *result.final_metrics.test_accuracy_deep_knn;
    }
    out << "\nreports written to " << dir.string() << "\n";
  } catch (const PipelineAborted& aborted) {
    write_episode_csv(dir / "episodes.csv", aborted.partial());
    write_text(dir / "summary.json", run_summary(config, aborted.partial(), nullptr).dump(2) + "\n");
    std::rethrow_exception(aborted.cause());
  }
  return kExitOk;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const PipelineConfig config = resolve_config(a.config, out);
  const LabeledDataset train = load_dataset(a.train);
  const LabeledDataset test = load_dataset(a.test);
  if (!test.true_labels) throw std::invalid_argument("test set needs true labels");

  // The model is trained on the reference set's current labels only.
  std::vector<std::size_t> sizes{train.dim()};
  sizes.insert(sizes.end(), config.classifier.hidden.begin(), config.classifier.hidden.end());
  sizes.push_back(train.num_classes);
  const auto trained = train_episode(init_classifier(sizes, config.seed, config.classifier.embedding_layer),
                                     train, 0.0, config.epochs_per_episode, config.optimizer, config.loss,
                                     config.seed);
  const Evaluation eval = evaluate(trained.model, train, test, config);
  const std::size_t k = std::min(config.k, train.size());
  const double raw = accuracy(predict_deep_knn(train.embeddings, std::span<const Label>(train.current_labels),
                                               test.embeddings, k, config.metric, config.vote),
                              *test.true_labels);
  const json result = {{"head_accuracy", eval.head_accuracy},
                       {"deep_knn_accuracy", eval.deep_knn_accuracy},
                       {"raw_feature_knn_accuracy", raw},
                       {"k", k}};
  out << "head accuracy: " << eval.head_accuracy << "\ndeep-KNN accuracy: " << eval.deep_knn_accuracy
      << "\nraw-feature KNN accuracy: " << raw << "\n";
  if (!a.out.empty()) write_text(a.out, result.dump(2) + "\n");
  return kExitOk;
}

int do_ksweep(const SweepArgs& a, std::ostream& out) {
  const PipelineConfig config = resolve_config(a.config, out);
  const auto rows = k_sweep(config, load_dataset(a.train), a.k_values, a.interval);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_text(a.out, csv.str());
  for (const auto& r : rows) {
    out << "epoch " << r.epoch << " " << r.method;
    if (r.k) out << " k=" << *r.k;
    out << ": " << r.recovery << "\n";
  }
  return kExitOk;
}

int do_inspect(const InspectArgs& a, std::ostream& out) {
  const LabeledDataset data = load_dataset(a.in);
  std::vector<std::size_t> histogram(data.num_classes, 0);
  for (Label y : data.current_labels) ++histogram[y];
  json info = {{"n", data.size()},
               {"d", data.dim()},
               {"num_classes", data.num_classes},
               {"true_labels_present", data.true_labels.has_value()},
               {"current_label_histogram", histogram},
               {"noisy_vs_current_disagreement", label_error_rate(data.noisy_labels, data.current_labels)}};
  if (data.true_labels) {
    info["noisy_label_error_rate"] = label_error_rate(data.noisy_labels, *data.true_labels);
    info["current_label_recovery_rate"] = label_recovery_rate(data);
  }
  out << "n=" << data.size() << " d=" << data.dim() << " C=" << data.num_classes
      << " true_labels=" << (data.true_labels ? "present" : "absent") << "\n";
  for (std::size_t c = 0; c < histogram.size(); ++c) out << "  class " << c << ": " << histogram[c] << "\n";
  if (data.true_labels) {
    out << "noisy label error rate: " << info["noisy_label_error_rate"].get<double>()
        << "\ncurrent label recovery rate: " << info["current_label_recovery_rate"].get<double>() << "\n";
  }
  if (!a.json_out.empty()) write_text(a.json_out, info.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative deep-KNN noisy label correction"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate Gaussian-cluster embeddings");
  synth_cmd->add_option("--classes", synth.classes, "Number of classes")->check(CLI::Range(2u, 1u << 20));
  synth_cmd->add_option("--per-class", synth.per_class, "Samples per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", synth.dim, "Feature dimension")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--separation", synth.separation, "Minimum center distance")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--out", synth.out, "Output EMB1 file")->required();
  synth_cmd->add_option("--test-per-class", synth.test_per_class, "Held-out samples per class");
  synth_cmd->add_option("--test-out", synth.test_out, "Output EMB1 file for the held-out split");

  CorruptArgs corrupt;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Inject label noise");
  corrupt_cmd->add_option("--in", corrupt.in, "Input EMB1 file")->required();
  corrupt_cmd->add_option("--out", corrupt.out, "Output EMB1 file")->required();
  corrupt_cmd->add_option("--kind", corrupt.kind, "symmetric or asymmetric");
  corrupt_cmd->add_option("--level", corrupt.level, "Noise level in [0, 1]")->required();
  corrupt_cmd->add_option("--transitions", corrupt.transitions,
                          "mnist, cifar10, or source:target pairs (asymmetric only)");
  corrupt_cmd->add_option("--seed", corrupt.seed, "Random seed");

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Iterative training and KNN label correction");
  run_cmd->add_option("--config", run_args.config, "JSON config (defaults when omitted)");
  run_cmd->add_option("--train", run_args.train, "Training EMB1 file")->required();
  run_cmd->add_option("--test", run_args.test, "Test EMB1 file with true labels");
  run_cmd->add_option("--report-dir", run_args.report_dir, "Output directory")->required();

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Train on current labels and score head vs deep-KNN");
  eval_cmd->add_option("--config", eval.config, "JSON config");
  eval_cmd->add_option("--train", eval.train, "Reference EMB1 file (current labels are used)")->required();
  eval_cmd->add_option("--test", eval.test, "Test EMB1 file with true labels")->required();
  eval_cmd->add_option("--out", eval.out, "JSON result file");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("ksweep", "Recovery versus k within one episode");
  sweep_cmd->add_option("--config", sweep.config, "JSON config");
  sweep_cmd->add_option("--train", sweep.train, "Training EMB1 file with true labels")->required();
  sweep_cmd->add_option("--k-values", sweep.k_values, "k values")->delimiter(',');
  sweep_cmd->add_option("--interval", sweep.interval, "Epochs between measurements")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep.out, "Output CSV")->required();

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize an EMB1 file");
  inspect_cmd->add_option("--in", inspect.in, "EMB1 file")->required();
  inspect_cmd->add_option("--json", inspect.json_out, "Write the summary as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (e.get_exit_code() == 0) return kExitOk;
    return kExitConfig;
  }

  try {
    if (synth_cmd->parsed()) return do_synth(synth, out);
    if (corrupt_cmd->parsed()) return do_corrupt(corrupt, out);
    if (run_cmd->parsed()) return do_run(run_args, out);
    if (eval_cmd->parsed()) return do_evaluate(eval, out);
    if (sweep_cmd->parsed()) return do_ksweep(sweep, out);
    if (inspect_cmd->parsed()) return do_inspect(inspect, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "data format error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace knnclean
