// SPDX-License-Identifier: Apache-2.0

#include "infosieve/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace infosieve {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

RunConfig RunConfig::paper_defaults() {
  RunConfig c;
  c.n_epochs = 200;
  c.batch_size = 128;
  c.weights = loss::LossWeights{};
  return c;
}

void RunConfig::validate() const {
  weights.validate();
  if (n_epochs < 0) throw std::invalid_argument("n_epochs must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (code_len == 0 || code_len > 24) throw std::invalid_argument("code_len must lie in [1, 24]");
  if (hidden == 0 || embed_dim == 0) throw std::invalid_argument("hidden and embed_dim must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(age_max >= 1.0)) throw std::invalid_argument("age_max must be >= 1");
  if (!(aug_sigma >= 0.0)) throw std::invalid_argument("aug_sigma must be >= 0");
  if (!(aug_drop >= 0.0 && aug_drop < 1.0)) throw std::invalid_argument("aug_drop must lie in [0, 1)");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (cluster_restarts < 1) throw std::invalid_argument("cluster_restarts must be >= 1");
}

namespace {

json weights_json(const loss::LossWeights& w) {
  return {{"alpha", w.alpha},         {"beta", w.beta},
          {"delta", w.delta},         {"gamma", w.gamma},
          {"zeta", w.zeta},           {"mu", w.mu},
          {"lambda_in", w.lambda_in}, {"lambda_code", w.lambda_code},
          {"p", w.p},                 {"tau", w.tau},
          {"smoothing", w.smoothing}, {"scalar_code_contrast", w.scalar_code_contrast}};
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

json config_json(const RunConfig& c) {
  return {
      {"data",
       {{"seed", c.data.seed},
        {"depth", c.data.depth},
        {"per_leaf", c.data.per_leaf},
        {"dim", c.data.dim},
        {"noise_sigma", c.data.noise_sigma},
        {"level_scale", c.data.level_scale}}},
      {"embedding_path", c.embedding_path},
      {"known_class_frac", c.known_class_frac},
      {"labeled_frac", c.labeled_frac},
      {"weights", weights_json(c.weights)},
      {"age_max", c.age_max},
      {"code_len", c.code_len},
      {"hidden", c.hidden},
      {"embed_dim", c.embed_dim},
      {"batch_size", c.batch_size},
      {"n_epochs", c.n_epochs},
      {"seed", c.seed},
      {"lr", c.lr},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"aug_sigma", c.aug_sigma},
      {"aug_drop", c.aug_drop},
      {"balanced_pseudo", c.balanced_pseudo},
      {"cluster_restarts", c.cluster_restarts},
      {"deterministic", c.deterministic},
      {"checkpoint_every", c.checkpoint_every},
      {"out_dir", c.out_dir},
  };
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(); }

RunConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  static const std::set<std::string> known_keys = {
      "data",       "embedding_path", "known_class_frac", "labeled_frac", "weights",      "age_max",
      "code_len",   "hidden",         "embed_dim",        "batch_size",   "n_epochs",     "seed",
      "lr",         "momentum",       "weight_decay",     "aug_sigma",    "aug_drop",     "balanced_pseudo", "cluster_restarts",
      "deterministic", "checkpoint_every", "out_dir"};
  for (const auto& [key, _] : j.items()) {
    if (!known_keys.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  RunConfig c;
  if (auto d = j.find("data"); d != j.end()) {
    read(*d, "seed", c.data.seed);
    read(*d, "depth", c.data.depth);
    read(*d, "per_leaf", c.data.per_leaf);
    read(*d, "dim", c.data.dim);
    read(*d, "noise_sigma", c.data.noise_sigma);
    read(*d, "level_scale", c.data.level_scale);
  }
  if (auto w = j.find("weights"); w != j.end()) {
    read(*w, "alpha", c.weights.alpha);
    read(*w, "beta", c.weights.beta);
    read(*w, "delta", c.weights.delta);
    read(*w, "gamma", c.weights.gamma);
    read(*w, "zeta", c.weights.zeta);
    read(*w, "mu", c.weights.mu);
    read(*w, "lambda_in", c.weights.lambda_in);
    read(*w, "lambda_code", c.weights.lambda_code);
    read(*w, "p", c.weights.p);
    read(*w, "tau", c.weights.tau);
    read(*w, "smoothing", c.weights.smoothing);
    read(*w, "scalar_code_contrast", c.weights.scalar_code_contrast);
  }
  read(j, "embedding_path", c.embedding_path);
  read(j, "known_class_frac", c.known_class_frac);
  read(j, "labeled_frac", c.labeled_frac);
  read(j, "age_max", c.age_max);
  read(j, "code_len", c.code_len);
  read(j, "hidden", c.hidden);
  read(j, "embed_dim", c.embed_dim);
  read(j, "batch_size", c.batch_size);
  read(j, "n_epochs", c.n_epochs);
  read(j, "seed", c.seed);
  read(j, "lr", c.lr);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "aug_sigma", c.aug_sigma);
  read(j, "aug_drop", c.aug_drop);
  read(j, "balanced_pseudo", c.balanced_pseudo);
  read(j, "cluster_restarts", c.cluster_restarts);
  read(j, "deterministic", c.deterministic);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "out_dir", c.out_dir);
  return c;
}

// ---------------------------------------------------------------------------
// Data plumbing

Experiment prepare(const RunConfig& cfg) {
  Experiment ex;
  ex.dataset = cfg.embedding_path.empty() ? data::gen_hier_dataset(cfg.data)
                                          : data::load_embedding_file(cfg.embedding_path);
  ex.split = data::gcd_split(ex.dataset, cfg.known_class_frac, cfg.labeled_frac, cfg.seed);
  for (std::size_t k = 0; k < ex.split.known_classes.size(); ++k)
    ex.known_index[ex.split.known_classes[k]] = static_cast<int>(k);
  ex.n_classes = ex.dataset.classes().size();
  return ex;
}

cluster::Anchors anchors(const Experiment& ex) {
  cluster::Anchors a;
  for (std::size_t i : ex.split.labeled_idx) a[i] = ex.known_index.at(ex.dataset.labels[i]);
  return a;
}

codec::TrainSchedule schedule_after(int epochs_trained, const RunConfig& cfg) {
  return codec::TrainSchedule::at(epochs_trained, cfg.n_epochs, cfg.age_max);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

cluster::GcdMetrics space_metrics(const Matrix& space, const Experiment& ex, const cluster::Anchors& a,
                                  std::uint64_t seed, int n_init) {
  const auto assignment = cluster::ss_kmeans_restarts(space, a, ex.n_classes, seed, n_init);
  return cluster::gcd_accuracy(assignment.assign, ex.dataset.labels, ex.split.known_classes, ex.split.labeled_idx);
}

void check_model_fits(const Model& model, const Experiment& ex) {
  model.validate();
  if (model.shape.input_dim != ex.dataset.dim()) {
    throw std::invalid_argument("model expects input dimension " + std::to_string(model.shape.input_dim) +
                                " but data has " + std::to_string(ex.dataset.dim()));
  }
  if (model.shape.n_known != ex.split.known_classes.size()) {
    throw std::invalid_argument("model was trained with " + std::to_string(model.shape.n_known) +
                                " known classes but the split has " + std::to_string(ex.split.known_classes.size()));
  }
}

}  // namespace

EvalResult evaluate(const Model& model, const Experiment& ex, const codec::TrainSchedule& schedule,
                    std::uint64_t seed, int n_init) {
  check_model_fits(model, ex);
  const Embeddings e = embed(model, ex.dataset.features, schedule);
  const cluster::Anchors a = anchors(ex);
  EvalResult r;
  r.feature = space_metrics(e.features, ex, a, seed, n_init);
  r.code = space_metrics(e.code_space, ex, a, seed, n_init);
  const auto base = cluster::kmeans_restarts(ex.dataset.features, ex.n_classes, seed, n_init);
  r.baseline = cluster::gcd_accuracy(base.assign, ex.dataset.labels, ex.split.known_classes, ex.split.labeled_idx);
  return r;
}

BinarizationStats binarization(const Model& model, const Matrix& x, const codec::TrainSchedule& schedule) {
  const Embeddings e = embed(model, x, schedule);
  BinarizationStats s;
  auto cond = [](double v) {
    const double t = v * (1.0 - v);
    return t * t;
  };
  for (double v : e.soft_code.data()) s.code += cond(0.5 * (v + 1.0));
  for (double v : e.soft_mask.data()) s.mask += cond(v);
  s.code /= static_cast<double>(std::max<std::size_t>(1, e.soft_code.size()));
  s.mask /= static_cast<double>(std::max<std::size_t>(1, e.soft_mask.size()));
  return s;
}

tree::LearnedTree extract_learned_tree(const Model& model, const data::HierDataset& ds,
                                       const codec::TrainSchedule& schedule) {
  const Embeddings e = embed(model, ds.features, schedule);
  tree::Encoding enc;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    enc.codes.push_back(codec::harden(e.soft_code.row_span(i), e.soft_mask.row_span(i)));
  }
  return tree::summarize_codes(std::move(enc), ds.labels);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

const char* activation_name(diff::Activation a) { return a == diff::Activation::Gelu ? "gelu" : "identity"; }

void write_values(std::ostringstream& os, char tag, const Matrix& m) {
  char num[32];
  os << tag;
  for (double v : m.data()) {
    std::snprintf(num, sizeof num, "%.17g", v);
    os << ' ' << num;
  }
  os << '\n';
}

const char* const kBlockNames[] = {"feature", "code", "mask", "categorizer"};
constexpr const char* kCheckpointMagic = "infosieve-checkpoint";
constexpr const char* kCheckpointVersion = "v1";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string format_checkpoint(const Checkpoint& ck) {
  ck.model.validate();
  std::ostringstream os;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "epochs_trained " << ck.epochs_trained << '\n';
  os << "known_classes";
  for (int c : ck.known_classes) os << ' ' << c;
  os << '\n';
  os << "config " << config_to_json(ck.config) << '\n';
  os << "shape " << ck.model.shape.input_dim << ' ' << ck.model.shape.hidden << ' ' << ck.model.shape.embed_dim
     << ' ' << ck.model.shape.code_len << ' ' << ck.model.shape.n_known << '\n';
  for (std::size_t b = 0; b < ck.model.blocks.size(); ++b) {
    const auto& blk = ck.model.blocks[b];
    os << "block " << kBlockNames[b] << ' ' << blk.layers.size() << '\n';
    for (const auto& l : blk.layers) {
      os << "layer " << activation_name(l.activation) << ' ' << l.weight.rows() << ' ' << l.weight.cols() << '\n';
      write_values(os, 'w', l.weight);
      write_values(os, 'b', l.bias);
    }
  }
  return os.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&](const std::string& expect) -> std::istringstream {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint truncated, expected '" + expect + "'");
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != expect) throw std::runtime_error("checkpoint: expected '" + expect + "', got '" + tag + "'");
    return ls;
  };

  std::string version;
  next(kCheckpointMagic) >> version;
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint version '" + version + "' not supported");

  Checkpoint ck;
  next("epochs_trained") >> ck.epochs_trained;
  {
    auto ls = next("known_classes");
    for (int c; ls >> c;) ck.known_classes.push_back(c);
  }
  {
    next("config");
    ck.config = config_from_json(line.substr(std::string("config ").size()));
  }
  {
    auto ls = next("shape");
    auto& s = ck.model.shape;
    ls >> s.input_dim >> s.hidden >> s.embed_dim >> s.code_len >> s.n_known;
    if (!ls) throw std::runtime_error("checkpoint: malformed shape line");
  }
  for (const char* name : kBlockNames) {
    auto ls = next("block");
    std::string got;
    std::size_t n_layers = 0;
    ls >> got >> n_layers;
    if (got != name) throw std::runtime_error("checkpoint: expected block '" + std::string(name) + "'");
    diff::ParamStore blk;
    for (std::size_t l = 0; l < n_layers; ++l) {
      auto hs = next("layer");
      std::string act;
      std::size_t rows = 0, cols = 0;
      hs >> act >> rows >> cols;
      if (!hs || (act != "gelu" && act != "identity")) throw std::runtime_error("checkpoint: malformed layer header");
      diff::DenseLayer layer{Matrix(rows, cols), Matrix(1, rows),
                             act == "gelu" ? diff::Activation::Gelu : diff::Activation::Identity};
      for (Matrix* m : {&layer.weight, &layer.bias}) {
        auto vs = next(m == &layer.weight ? "w" : "b");
        for (double& v : m->data()) {
          std::string tok;
          if (!(vs >> tok)) throw std::runtime_error("checkpoint: too few values in " + std::string(name));
          v = std::strtod(tok.c_str(), nullptr);
        }
        std::string extra;
        if (vs >> extra) throw std::runtime_error("checkpoint: too many values in " + std::string(name));
      }
      blk.layers.push_back(std::move(layer));
    }
    ck.model.blocks.push_back(std::move(blk));
  }
  ck.model.validate();
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const fs::path& path) { write_text(path, format_checkpoint(ck)); }
Checkpoint load_checkpoint(const fs::path& path) { return parse_checkpoint(read_text(path)); }

namespace {

json gcd_json(const cluster::GcdMetrics& m) {
  json matching = json::array();
  for (const auto& [cl, cat] : m.matching) matching.push_back({cl, cat});
  return {{"acc_all", m.acc_all}, {"acc_known", m.acc_known}, {"acc_novel", m.acc_novel}, {"n_all", m.n_all},
          {"n_known", m.n_known}, {"n_novel", m.n_novel},     {"matching", matching}};
}

cluster::GcdMetrics gcd_from_json(const json& j) {
  cluster::GcdMetrics m;
  m.acc_all = j.at("acc_all").get<double>();
  m.acc_known = j.at("acc_known").get<double>();
  m.acc_novel = j.at("acc_novel").get<double>();
  m.n_all = j.at("n_all").get<std::size_t>();
  m.n_known = j.at("n_known").get<std::size_t>();
  m.n_novel = j.at("n_novel").get<std::size_t>();
  for (const auto& pair : j.at("matching")) m.matching[pair.at(0).get<int>()] = pair.at(1).get<int>();
  return m;
}

}  // namespace

std::string metrics_to_json(const EvalResult& r) {
  return json{{"feature", gcd_json(r.feature)}, {"code", gcd_json(r.code)}, {"baseline", gcd_json(r.baseline)}}
      .dump();
}

EvalResult metrics_from_json(const std::string& text) {
  const json j = json::parse(text);
  return {gcd_from_json(j.at("feature")), gcd_from_json(j.at("code")), gcd_from_json(j.at("baseline"))};
}

std::string history_jsonl(const std::vector<loss::LossBreakdown>& history, const RunConfig& cfg) {
  std::string out;
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& h = history[e];
    const auto s = schedule_after(static_cast<int>(e), cfg);
    json j = {{"epoch", e},
              {"age", s.age},
              {"base", s.base},
              {"lr", diff::cosine_lr(cfg.lr, static_cast<int>(e), cfg.n_epochs)},
              {"c_in_u", h.c_in_u},
              {"c_in_s", h.c_in_s},
              {"c_code_u", h.c_code_u},
              {"c_code_s", h.c_code_s},
              {"length", h.length},
              {"cat", h.cat},
              {"code_cond", h.code_cond},
              {"mask_cond", h.mask_cond},
              {"total", h.total}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string summary_csv(const RunResult& r) {
  std::string out = "space,acc_all,acc_known,acc_novel\n";
  char row[160];
  const std::pair<const char*, const cluster::GcdMetrics*> rows[] = {
      {"feature", &r.metrics.feature}, {"code", &r.metrics.code}, {"kmeans_baseline", &r.metrics.baseline}};
  for (const auto& [name, m] : rows) {
    std::snprintf(row, sizeof row, "%s,%.6f,%.6f,%.6f\n", name, m->acc_all, m->acc_known, m->acc_novel);
    out += row;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

loss::LossBreakdown& operator+=(loss::LossBreakdown& a, const loss::LossBreakdown& b) {
  a.c_in_u += b.c_in_u;
  a.c_in_s += b.c_in_s;
  a.c_code_u += b.c_code_u;
  a.c_code_s += b.c_code_s;
  a.length += b.length;
  a.cat += b.cat;
  a.code_cond += b.code_cond;
  a.mask_cond += b.mask_cond;
  a.total += b.total;
  return a;
}

loss::LossBreakdown scaled(loss::LossBreakdown a, double s) {
  for (double* v : {&a.c_in_u, &a.c_in_s, &a.c_code_u, &a.c_code_s, &a.length, &a.cat, &a.code_cond, &a.mask_cond,
                    &a.total})
    *v *= s;
  return a;
}

std::vector<int> pseudo_labels(const Model& model, const Experiment& ex, const cluster::Anchors& a,
                               const codec::TrainSchedule& s, const RunConfig& cfg) {
  const Embeddings e = embed(model, ex.dataset.features, s);
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s.epoch);
  const auto assignment = cfg.balanced_pseudo ? cluster::balanced_kmeans(e.features, ex.n_classes, seed, 100, a)
                                              : cluster::ss_kmeans_restarts(e.features, a, ex.n_classes, seed, cfg.cluster_restarts);
  return assignment.assign;
}

std::string manifest_json(const RunConfig& cfg) {
  return json{{"tool", "infosieve"}, {"version", kVersion}, {"seed", cfg.seed}, {"deterministic", cfg.deterministic},
              {"config", config_json(cfg)}}
      .dump(2);
}

}  // namespace

RunResult train(const RunConfig& cfg) { return train(cfg, prepare(cfg)); }

RunResult train(const RunConfig& cfg, const Experiment& ex) {
  cfg.validate();
  const std::size_t n = ex.dataset.size();
  ModelShape shape;
  shape.input_dim = ex.dataset.dim();
  shape.hidden = cfg.hidden;
  shape.embed_dim = cfg.embed_dim;
  shape.code_len = cfg.code_len;
  shape.n_known = ex.split.known_classes.size();

  RunResult r;
  r.model = Model::init(shape, cfg.seed);
  r.manifest = manifest_json(cfg);
  const fs::path out_dir = cfg.out_dir;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(out_dir / "manifest.json", r.manifest);
  }
  auto checkpoint = [&](int epochs, const std::string& name) {
    if (cfg.out_dir.empty()) return std::string();
    const fs::path path = out_dir / name;
    save_checkpoint({cfg, r.model, epochs, ex.split.known_classes}, path);
    return path.string();
  };

  const cluster::Anchors a = anchors(ex);
  std::vector<int> labels(n, -1);
  for (const auto& [i, c] : a) labels[i] = c;

  diff::MomentumSgd opt(cfg.momentum, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    const codec::TrainSchedule sched = schedule_after(epoch, cfg);
    const double lr = diff::cosine_lr(cfg.lr, epoch, cfg.n_epochs);
    const std::vector<int> pseudo = pseudo_labels(r.model, ex, a, sched, cfg);
    std::shuffle(order.begin(), order.end(), rng);

    loss::LossBreakdown epoch_sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      if (end - start < 2) continue;
      BatchInput batch;
      batch.view1 = Matrix(end - start, ex.dataset.dim());
      batch.view2 = Matrix(end - start, ex.dataset.dim());
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto x = ex.dataset.features.row_span(i);
        const auto v1 = data::augment(x, rng, cfg.aug_sigma, cfg.aug_drop);
        const auto v2 = data::augment(x, rng, cfg.aug_sigma, cfg.aug_drop);
        std::copy(v1.begin(), v1.end(), batch.view1.row_span(k - start).begin());
        std::copy(v2.begin(), v2.end(), batch.view2.row_span(k - start).begin());
        batch.labels.push_back(labels[i]);
        batch.pseudo.push_back(pseudo[i]);
      }
      try {
        BatchLoss bl = batch_loss(r.model.blocks, batch, sched, cfg.weights, true);
        opt.step(r.model.blocks, bl.grad.grads, lr);
        epoch_sum += bl.breakdown;
        ++batches;
      } catch (const diff::NonFiniteError& err) {
        const std::string kept = checkpoint(epoch, "checkpoint_last_good.txt");
        throw std::runtime_error(std::string("training aborted at epoch ") + std::to_string(epoch) + ": " +
                                 err.what() + (kept.empty() ? "" : "; last good checkpoint at " + kept));
      }
    }
    r.history.push_back(scaled(epoch_sum, batches ? 1.0 / static_cast<double>(batches) : 0.0));
    r.epochs_trained = epoch + 1;
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      checkpoint(epoch + 1, "checkpoint_epoch" + std::to_string(epoch + 1) + ".txt");
    }
  }

  const codec::TrainSchedule final_sched = schedule_after(r.epochs_trained, cfg);
  r.metrics = evaluate(r.model, ex, final_sched, cfg.seed, cfg.cluster_restarts);
  r.tree = extract_learned_tree(r.model, ex.dataset, final_sched);
  r.binarization = binarization(r.model, ex.dataset.features, final_sched);
  if (!cfg.out_dir.empty()) {
    r.checkpoint_path = checkpoint(r.epochs_trained, "checkpoint.txt");
    write_text(out_dir / "metrics.jsonl", history_jsonl(r.history, cfg));
    write_text(out_dir / "final_metrics.json", metrics_to_json(r.metrics));
    write_text(out_dir / "summary.csv", summary_csv(r));
    write_text(out_dir / "tree.txt", r.tree.text);
    write_text(out_dir / "tree.dot", r.tree.dot);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ablation

const std::vector<std::string>& loss_switch_names() {
  static const std::vector<std::string> names = {"c_in", "c_code", "code_cond", "length", "mask_cond", "cat"};
  return names;
}

loss::LossWeights drop_terms(loss::LossWeights w, const std::set<std::string>& dropped) {
  for (const auto& name : dropped) {
    if (name == "c_in") {
      w.alpha = 0.0;
    } else if (name == "c_code") {
      w.beta = 0.0;
    } else if (name == "code_cond") {
      w.zeta = 0.0;
    } else if (name == "length") {
      w.delta = 0.0;
    } else if (name == "mask_cond") {
      w.mu = 0.0;
    } else if (name == "cat") {
      w.gamma = 0.0;
    } else {
      throw std::invalid_argument("unknown loss switch '" + name + "'");
    }
  }
  return w;
}

std::vector<std::set<std::string>> leave_one_out_rows() {
  std::vector<std::set<std::string>> rows = {{}};
  for (const auto& name : loss_switch_names()) rows.push_back({name});
  return rows;
}

unsigned thread_cap() {
  unsigned cap = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("INFOSIEVE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) cap = static_cast<unsigned>(v);
  }
  return cap;
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<std::set<std::string>>& rows) {
  std::vector<AblationRow> out(rows.size());
  std::vector<RunConfig> configs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RunConfig c = cfg;
    c.weights = drop_terms(cfg.weights, rows[i]);
    if (!cfg.out_dir.empty()) c.out_dir = (fs::path(cfg.out_dir) / ("row" + std::to_string(i))).string();
    out[i].dropped = rows[i];
    configs.push_back(std::move(c));
  }
  const Experiment ex = prepare(cfg);

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        out[i].result = train(configs[i], ex);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::min<unsigned>(thread_cap(), static_cast<unsigned>(std::max<std::size_t>(1, rows.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  if (!cfg.out_dir.empty()) write_text(fs::path(cfg.out_dir) / "ablation.csv", ablation_report(out));
  return out;
}

std::string ablation_report(const std::vector<AblationRow>& rows) {
  std::string out;
  for (const auto& name : loss_switch_names()) out += name + ',';
  out += "code_all,code_known,code_novel,feature_all,feature_known,feature_novel\n";
  char buf[200];
  for (const auto& row : rows) {
    for (const auto& name : loss_switch_names()) out += row.dropped.count(name) ? "0," : "1,";
    const auto& m = row.result.metrics;
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.code.acc_all, m.code.acc_known,
                  m.code.acc_novel, m.feature.acc_all, m.feature.acc_known, m.feature.acc_novel);
    out += buf;
  }
  return out;
}

}  // namespace infosieve
