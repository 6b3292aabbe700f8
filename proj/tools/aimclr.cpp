// Command-line entry point: synth | pretrain | eval-knn | eval-linear |
// finetune | fuse | export-embeddings.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aimclr/evaluation.hpp"
#include "aimclr/skeleton.hpp"
#include "aimclr/training.hpp"

namespace {

using namespace aimclr;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_weights(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--weights: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError("--weights: expected a comma-separated list");
  return out;
}

void emit(const EvalReport& report, const std::string& json_path) {
  std::cout << report.table() << report.to_json() << "\n";
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write " + json_path);
    out << report.to_json() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised contrastive pretraining and evaluation for skeleton sequences"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // synth
  SyntheticSpec synth;
  std::string synth_out;
  auto* cmd_synth = app.add_subcommand("synth", "Write a labeled synthetic dataset (SKL1 files, manifests, graph)");
  cmd_synth->add_option("--classes", synth.classes, "Number of classes")->capture_default_str()->check(CLI::PositiveNumber);
  cmd_synth->add_option("--per-class", synth.per_class, "Training samples per class")->capture_default_str()->check(CLI::PositiveNumber);
  cmd_synth->add_option("--test-per-class", synth.test_per_class, "Held-out samples per class (test_manifest.json)")->capture_default_str();
  cmd_synth->add_option("--frames", synth.frames, "Frames per sequence")->capture_default_str()->check(CLI::PositiveNumber);
  cmd_synth->add_option("--joints", synth.joints, "Joints (9 = three-branch tree, 25 = NTU layout)")->capture_default_str();
  cmd_synth->add_option("--persons", synth.persons, "Persons per sequence")->capture_default_str()->check(CLI::PositiveNumber);
  cmd_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  cmd_synth->add_option("--out", synth_out, "Output directory")->required();

  // pretrain
  std::string cfg_path, data_path, graph_path, out_dir, resume_dir, stream_flag;
  std::optional<std::uint64_t> seed_flag;
  bool quiet = false;
  auto* cmd_pre = app.add_subcommand("pretrain", "Run two-stage contrastive pretraining");
  cmd_pre->add_option("--config", cfg_path, "Training config JSON (defaults when omitted)")->check(CLI::ExistingFile);
  cmd_pre->add_option("--data", data_path, "Training manifest JSON")->required()->check(CLI::ExistingFile);
  cmd_pre->add_option("--graph", graph_path, "Skeleton graph JSON")->required()->check(CLI::ExistingFile);
  cmd_pre->add_option("--out", out_dir, "Run directory (ep<N>/ checkpoints and metrics.jsonl)")->required();
  cmd_pre->add_option("--seed", seed_flag, "Seed; overrides the config");
  cmd_pre->add_option("--stream", stream_flag, "joint|bone|motion; overrides the config")
      ->check(CLI::IsMember({"joint", "bone", "motion"}));
  cmd_pre->add_option("--resume", resume_dir, "Checkpoint directory to resume from")->check(CLI::ExistingDirectory);
  cmd_pre->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  // evaluation commands share these
  std::string ckpt, train_path, test_path, json_out;
  std::size_t k_eval = 1;
  std::uint64_t eval_seed = 7;
  LinearEvalConfig lin;
  FinetuneConfig ft;

  auto add_eval_common = [&](CLI::App* cmd) {
    cmd->add_option("--ckpt", ckpt, "Checkpoint directory (e.g. run1/ep30)")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--train,--data", train_path, "Labeled training manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test_path, "Labeled test manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--json", json_out, "Also write the JSON report to this file");
  };

  auto* cmd_knn = app.add_subcommand("eval-knn", "k-nearest-neighbor evaluation on frozen features");
  add_eval_common(cmd_knn);
  cmd_knn->add_option("--k", k_eval, "Neighbors per vote")->capture_default_str()->check(CLI::PositiveNumber);

  auto* cmd_lin = app.add_subcommand("eval-linear", "Linear classifier on frozen features");
  add_eval_common(cmd_lin);
  cmd_lin->add_option("--epochs", lin.epochs, "Classifier epochs")->capture_default_str();
  cmd_lin->add_option("--lr", lin.lr, "Learning rate")->capture_default_str();
  cmd_lin->add_option("--batch-size", lin.batch_size, "Mini-batch size (0 = full batch)")->capture_default_str();
  cmd_lin->add_option("--seed", eval_seed, "Seed for batch order")->capture_default_str();

  auto* cmd_ft = app.add_subcommand("finetune", "Train encoder and classifier on (a fraction of) the labels");
  add_eval_common(cmd_ft);
  cmd_ft->add_option("--label-fraction", ft.label_fraction, "Fraction of labels per class, (0, 1]")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  cmd_ft->add_option("--epochs", ft.epochs, "Epochs")->capture_default_str();
  cmd_ft->add_option("--lr", ft.lr, "Learning rate")->capture_default_str();
  cmd_ft->add_option("--batch-size", ft.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd_ft->add_option("--seed", eval_seed, "Seed for subsampling and batch order")->capture_default_str();

  std::vector<std::string> report_paths;
  std::string weights_flag;
  auto* cmd_fuse = app.add_subcommand("fuse", "Weighted score fusion of per-stream JSON reports");
  cmd_fuse->add_option("--reports", report_paths, "Report files, one per stream")
      ->required()
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  cmd_fuse->add_option("--weights", weights_flag,
                       "Comma-separated weights w_j,w_b,w_m (default 0.6 joint, 0.6 bone, 0.4 motion)");
  cmd_fuse->add_option("--json", json_out, "Also write the JSON report to this file");

  std::string export_out;
  auto* cmd_exp = app.add_subcommand("export-embeddings", "Write pooled features as JSON lines");
  cmd_exp->add_option("--ckpt", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  cmd_exp->add_option("--data", train_path, "Manifest to embed")->required()->check(CLI::ExistingFile);
  cmd_exp->add_option("--out", export_out, "Output .jsonl path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (cmd_synth->parsed()) {
      const DatasetManifest m = generate_synthetic(synth, synth_out);
      std::cout << "wrote " << m.entries.size() << " training sequences";
      if (synth.test_per_class > 0) std::cout << " and " << synth.test_per_class * synth.classes << " test sequences";
      std::cout << " to " << synth_out << "\n";
    } else if (cmd_pre->parsed()) {
      TrainConfig cfg = cfg_path.empty() ? TrainConfig{} : load_train_config(cfg_path);
      if (seed_flag) cfg.seed = *seed_flag;
      if (!stream_flag.empty()) cfg.stream = parse_stream(stream_flag);
      cfg.validate();
      const auto result = run_pretraining(cfg, data_path, graph_path, out_dir,
                                          resume_dir.empty() ? std::nullopt : std::optional(std::filesystem::path(resume_dir)),
                                          !quiet);
      std::cout << "checkpoint " << result.last_checkpoint.string() << "\nmetrics " << result.metrics_log.string()
                << "\n";
    } else if (cmd_knn->parsed()) {
      emit(knn_eval(load_model(ckpt), load_labeled(train_path), load_labeled(test_path), k_eval), json_out);
    } else if (cmd_lin->parsed()) {
      lin.seed = eval_seed;
      emit(linear_eval(load_model(ckpt), load_labeled(train_path), load_labeled(test_path), lin), json_out);
    } else if (cmd_ft->parsed()) {
      if (!(ft.label_fraction > 0.0)) throw UsageError("--label-fraction must be greater than 0");
      ft.seed = eval_seed;
      emit(finetune_eval(load_model(ckpt), load_labeled(train_path), load_labeled(test_path), ft), json_out);
    } else if (cmd_fuse->parsed()) {
      std::vector<EvalReport> reports;
      std::vector<std::string> streams;
      for (const auto& p : report_paths) {
        reports.push_back(load_report(p));
        for (const auto& s : reports.back().streams) streams.push_back(s);
      }
      std::vector<double> weights;
      if (!weights_flag.empty()) {
        weights = parse_weights(weights_flag);
      } else if (streams.size() == reports.size()) {
        weights = default_fusion_weights(streams);
      } else {
        throw UsageError("reports do not name one stream each; pass --weights");
      }
      if (weights.size() != reports.size()) {
        throw UsageError("--weights has " + std::to_string(weights.size()) + " values for " +
                         std::to_string(reports.size()) + " reports");
      }
      emit(fuse_streams(reports, weights), json_out);
    } else if (cmd_exp->parsed()) {
      export_embeddings(ckpt, train_path, export_out);
      std::cout << "wrote " << export_out << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
