// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, training, evaluation, persistence and ablation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "infosieve/cluster.hpp"
#include "infosieve/datagen.hpp"
#include "infosieve/losses.hpp"
#include "infosieve/model.hpp"
#include "infosieve/treelab.hpp"

namespace infosieve {

inline constexpr const char* kVersion = "0.1.0";

/// Loss weights tuned for the synthetic desk runs. A length weight of 0.1
/// empties every mask within a few epochs at L=12, so it is much smaller here.
inline loss::LossWeights desk_loss_weights() {
  loss::LossWeights w;
  w.delta = 0.001;
  w.gamma = 0.5;
  w.mu = 0.1;
  w.lambda_code = 0.7;
  w.tau = 0.2;
  return w;
}

struct RunConfig {
  data::HierParams data;          // used when embedding_path is empty
  std::string embedding_path;
  double known_class_frac = 0.5;
  double labeled_frac = 0.5;

  loss::LossWeights weights = desk_loss_weights();
  double age_max = 5.0;
  std::size_t code_len = 12;
  std::size_t hidden = 64;
  std::size_t embed_dim = 32;

  std::size_t batch_size = 32;
  int n_epochs = 60;
  std::uint64_t seed = 0;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double aug_sigma = 0.05;
  double aug_drop = 0.0;
  bool balanced_pseudo = false;  // balanced k-means for per-epoch pseudo-labels
  int cluster_restarts = 10;     // k-means initialisations kept by best objective
  bool deterministic = true;

  int checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  std::string out_dir;       // empty: nothing is written

  /// 200 epochs, batch 128 and the published loss weights.
  static RunConfig paper_defaults();
  void validate() const;
};

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);

struct EvalResult {
  cluster::GcdMetrics feature;   // semi-supervised k-means on feature embeddings
  cluster::GcdMetrics code;      // ... on truncated code embeddings
  cluster::GcdMetrics baseline;  // plain k-means on the input features
};

struct BinarizationStats {
  double code = 0.0;  // mean of (b (1 - b))^2 over all code bits
  double mask = 0.0;  // same over mask bits
  double mean() const { return 0.5 * (code + mask); }
};

struct RunResult {
  std::vector<loss::LossBreakdown> history;  // one entry per epoch, batch-averaged
  EvalResult metrics;
  tree::LearnedTree tree;
  BinarizationStats binarization;
  Model model;
  int epochs_trained = 0;
  std::string checkpoint_path;
  std::string manifest;
};

/// Loaded or generated data together with its split.
struct Experiment {
  data::HierDataset dataset;
  data::GcdSplit split;
  std::map<int, int> known_index;  // known category -> known-class index
  std::size_t n_classes = 0;
};

Experiment prepare(const RunConfig& cfg);
/// Known-class index per labeled sample.
cluster::Anchors anchors(const Experiment& ex);

/// Schedule in force after `epochs_trained` of `n_epochs`.
codec::TrainSchedule schedule_after(int epochs_trained, const RunConfig& cfg);

RunResult train(const RunConfig& cfg);
RunResult train(const RunConfig& cfg, const Experiment& ex);

/// Every clustering keeps the best of n_init initialisations.
EvalResult evaluate(const Model& model, const Experiment& ex, const codec::TrainSchedule& schedule,
                    std::uint64_t seed, int n_init = 10);
BinarizationStats binarization(const Model& model, const Matrix& x, const codec::TrainSchedule& schedule);

/// Hardens every sample's code and summarises the resulting tree against labels.
tree::LearnedTree extract_learned_tree(const Model& model, const data::HierDataset& ds,
                                       const codec::TrainSchedule& schedule);

// Persistence ------------------------------------------------------------------

struct Checkpoint {
  RunConfig config;
  Model model;
  int epochs_trained = 0;
  std::vector<int> known_classes;
};

std::string format_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string metrics_to_json(const EvalResult& r);
EvalResult metrics_from_json(const std::string& text);
/// One JSON object per line, one line per epoch.
std::string history_jsonl(const std::vector<loss::LossBreakdown>& history, const RunConfig& cfg);
std::string summary_csv(const RunResult& r);

// Ablation ---------------------------------------------------------------------

/// Names accepted in an ablation row: c_in, c_code, code_cond, length, mask_cond, cat.
const std::vector<std::string>& loss_switch_names();
/// Copy of w with the coefficients of the dropped terms set to zero.
loss::LossWeights drop_terms(loss::LossWeights w, const std::set<std::string>& dropped);

struct AblationRow {
  std::set<std::string> dropped;
  RunResult result;
};

/// Runs one training per row (rows run concurrently, up to INFOSIEVE_THREADS).
std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<std::set<std::string>>& rows);
/// Full model plus each single term removed.
std::vector<std::set<std::string>> leave_one_out_rows();
std::string ablation_report(const std::vector<AblationRow>& rows);

/// INFOSIEVE_THREADS, defaulting to hardware concurrency, at least 1.
unsigned thread_cap();

}  // namespace infosieve
