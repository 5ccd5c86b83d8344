// SPDX-License-Identifier: Apache-2.0

#include "infosieve/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "infosieve/runner.hpp"

namespace infosieve::cli {

namespace fs = std::filesystem;

namespace {

/// Flags shared by train and ablate. Unset optionals leave the config alone.
struct TrainFlags {
  std::string config_path;
  bool paper_defaults = false;
  std::string data_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> code_len;
  std::optional<double> alpha, beta, delta, gamma, zeta, mu, lambda_code, p_norm, temp, smoothing;
  std::optional<bool> deterministic;
  std::string out;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_flag("--paper-defaults", paper_defaults, "200 epochs, batch 128, published loss weights");
    app.add_option("--data", data_path, "embedding file instead of generated data")->check(CLI::ExistingFile);
    app.add_option("--seed", seed);
    app.add_option("--epochs", epochs);
    app.add_option("--batch", batch);
    app.add_option("--code-len", code_len);
    app.add_option("--alpha", alpha);
    app.add_option("--beta", beta);
    app.add_option("--delta", delta);
    app.add_option("--gamma", gamma);
    app.add_option("--zeta", zeta);
    app.add_option("--mu", mu);
    app.add_option("--lambda-code", lambda_code);
    app.add_option("--p-norm", p_norm);
    app.add_option("--temp", temp);
    app.add_option("--smoothing", smoothing);
    app.add_option("--deterministic", deterministic)->expected(0, 1)->default_str("true");
    app.add_option("--out", out, "output directory");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      std::stringstream buf;
      buf << in.rdbuf();
      c = config_from_json(buf.str());
    }
    if (paper_defaults) {
      const RunConfig p = RunConfig::paper_defaults();
      c.n_epochs = p.n_epochs;
      c.batch_size = p.batch_size;
      c.weights = p.weights;
    }
    if (!data_path.empty()) c.embedding_path = data_path;
    if (seed) c.seed = *seed;
    if (epochs) c.n_epochs = *epochs;
    if (batch) c.batch_size = *batch;
    if (code_len) c.code_len = *code_len;
    if (alpha) c.weights.alpha = *alpha;
    if (beta) c.weights.beta = *beta;
    if (delta) c.weights.delta = *delta;
    if (gamma) c.weights.gamma = *gamma;
    if (zeta) c.weights.zeta = *zeta;
    if (mu) c.weights.mu = *mu;
    if (lambda_code) c.weights.lambda_code = *lambda_code;
    if (p_norm) c.weights.p = *p_norm;
    if (temp) c.weights.tau = *temp;
    if (smoothing) c.weights.smoothing = *smoothing;
    if (deterministic) c.deterministic = *deterministic;
    if (!out.empty()) c.out_dir = out;
    c.validate();
    return c;
  }
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string metrics_line(const EvalResult& m) {
  return "code all=" + fmt("%.4f", m.code.acc_all) + " known=" + fmt("%.4f", m.code.acc_known) +
         " novel=" + fmt("%.4f", m.code.acc_novel) + " | feature all=" + fmt("%.4f", m.feature.acc_all) +
         " known=" + fmt("%.4f", m.feature.acc_known) + " novel=" + fmt("%.4f", m.feature.acc_novel) +
         " | kmeans all=" + fmt("%.4f", m.baseline.acc_all);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

/// Experiment for a checkpoint, optionally over a different embedding file.
Experiment experiment_for(const Checkpoint& ck, const std::string& data_path) {
  RunConfig cfg = ck.config;
  if (!data_path.empty()) cfg.embedding_path = data_path;
  Experiment ex = prepare(cfg);
  if (ex.split.known_classes != ck.known_classes) {
    throw std::invalid_argument("data split does not match the checkpoint's known classes");
  }
  if (ex.dataset.dim() != ck.model.shape.input_dim) {
    throw std::invalid_argument("data has " + std::to_string(ex.dataset.dim()) + " features, checkpoint expects " +
                                std::to_string(ck.model.shape.input_dim));
  }
  return ex;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical category discovery with learned binary codes", "infosieve"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // gen
  data::HierParams gen_params;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Write a synthetic hierarchical embedding file");
  gen->add_option("--seed", gen_params.seed);
  gen->add_option("--depth", gen_params.depth);
  gen->add_option("--per-leaf", gen_params.per_leaf);
  gen->add_option("--dim", gen_params.dim);
  gen->add_option("--noise", gen_params.noise_sigma);
  gen->add_option("--out", gen_out, "embedding file to write")->required();

  // train
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write its artifacts");
  train_flags.attach(*train_cmd);

  // eval
  std::string eval_ckpt, eval_data, eval_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data)->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "directory for final_metrics.json");

  // ablate
  TrainFlags ablate_flags;
  std::vector<std::string> ablate_rows;
  auto* ablate_cmd = app.add_subcommand("ablate", "Retrain with loss terms switched off");
  ablate_flags.attach(*ablate_cmd);
  ablate_cmd->add_option("--drop", ablate_rows,
                         "one row per use: comma-separated terms to drop, 'none' for the full model "
                         "(default: full model plus each term alone)");

  // tree
  std::string tree_ckpt, tree_data, tree_out;
  auto* tree_cmd = app.add_subcommand("tree", "Extract the learned category tree");
  tree_cmd->add_option("--checkpoint", tree_ckpt)->required()->check(CLI::ExistingFile);
  tree_cmd->add_option("--data", tree_data)->check(CLI::ExistingFile);
  tree_cmd->add_option("--out", tree_out, "directory for tree.txt and tree.dot");

  // oracle
  std::string oracle_labels;
  std::size_t oracle_max = 8;
  auto* oracle = app.add_subcommand("oracle", "Exhaustive minimum-length encoding of a small labelled set");
  oracle->add_option("--labels", oracle_labels, "comma-separated labels, e.g. A,A,B,B")->required();
  oracle->add_option("--max-n", oracle_max, "refuse larger inputs");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const data::HierDataset ds = data::gen_hier_dataset(gen_params);
      data::save_embedding_file(ds, gen_out);
      out << "wrote " << ds.size() << " samples, " << ds.dim() << " dims, " << ds.classes().size()
          << " classes to " << gen_out << "\n";
    } else if (*train_cmd) {
      const RunConfig cfg = train_flags.resolve();
      const RunResult r = train(cfg);
      out << "epochs=" << r.epochs_trained << " " << metrics_line(r.metrics)
          << " | purity=" << fmt("%.4f", r.tree.mean_purity) << " binarization=" << fmt("%.3g", r.binarization.mean())
          << "\n";
    } else if (*eval) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const Experiment ex = experiment_for(ck, eval_data);
      const EvalResult m = evaluate(ck.model, ex, schedule_after(ck.epochs_trained, ck.config), ck.config.seed,
                                      ck.config.cluster_restarts);
      if (!eval_out.empty()) write_file(fs::path(eval_out) / "final_metrics.json", metrics_to_json(m));
      out << "epochs=" << ck.epochs_trained << " " << metrics_line(m) << "\n";
    } else if (*ablate_cmd) {
      const RunConfig cfg = ablate_flags.resolve();
      std::vector<std::set<std::string>> rows;
      for (const auto& spec : ablate_rows) {
        std::set<std::string> row;
        for (const auto& name : split(spec, ',')) {
          const std::string t = trim(name);
          if (!t.empty() && t != "none") row.insert(t);
        }
        drop_terms(cfg.weights, row);  // rejects unknown names before any training
        rows.push_back(std::move(row));
      }
      if (rows.empty()) rows = leave_one_out_rows();
      out << ablation_report(ablate(cfg, rows));
    } else if (*tree_cmd) {
      const Checkpoint ck = load_checkpoint(tree_ckpt);
      const Experiment ex = experiment_for(ck, tree_data);
      const tree::LearnedTree lt =
          extract_learned_tree(ck.model, ex.dataset, schedule_after(ck.epochs_trained, ck.config));
      if (!tree_out.empty()) {
        write_file(fs::path(tree_out) / "tree.txt", lt.text);
        write_file(fs::path(tree_out) / "tree.dot", lt.dot);
      } else {
        out << lt.text;
      }
      out << "nodes=" << lt.tree.nodes().size() << " purity=" << fmt("%.4f", lt.mean_purity) << "\n";
    } else if (*oracle) {
      std::vector<std::string> names;
      for (const auto& s : split(oracle_labels, ',')) names.push_back(trim(s));
      if (names.empty() || std::any_of(names.begin(), names.end(), [](const auto& s) { return s.empty(); })) {
        err << "oracle: --labels needs non-empty comma-separated labels\n";
        return 2;
      }
      const std::vector<int> labels = tree::dense_labels(names);
      const tree::OracleResult res = tree::oracle_optimal_encoding(labels, oracle_max);
      out << "min_total_length=" << res.min_total_length << " optima=" << res.optima.size() << "\n";
      const tree::Encoding& best = res.optima.front();
      for (std::size_t i = 0; i < names.size(); ++i) {
        out << i << " " << names[i] << " " << best.codes[i] << "\n";
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace infosieve::cli
