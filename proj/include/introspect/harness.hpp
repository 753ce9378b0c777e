#pragma once

// Run configuration and the stages shared by the CLI and the acceptance suite.
//
// Seed streams derived from the global seed (by name):
//   data-train, data-test    synthetic dataset generation
//   augment                  noise-augmentation draws
//   train-f, train-h, ...    model fitting (see fit_pipeline)
//   corruption               evaluation corruptions
//   al                       active learning
//   ood                      OOD set generation

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "introspect/active_learning.hpp"
#include "introspect/evaluation.hpp"
#include "introspect/features.hpp"
#include "introspect/ood.hpp"
#include "json.hpp"

namespace introspect {

struct DataConfig {
  std::string source = "synth-digits";  // synth-digits | synth-blobs | idx | csv
  int train_per_class = 600;
  int test_per_class = 200;
  int image_size = 28;
  int blob_classes = 10;
  int blob_dim = 784;
  double blob_spread = 0.5;
  std::string train_images, train_labels, test_images, test_labels;  // idx
  std::string train_csv, test_csv;                                    // csv
  ImageShape csv_shape;
};

struct EvalConfig {
  std::vector<CorruptionKind> corruptions{kAllCorruptions.begin(), kAllCorruptions.end()};
  int severity_min = 1;
  int severity_max = 5;
  BinReference bins = BinReference::MeanConfidence;
};

struct AugmentConfig {
  std::vector<CorruptionSpec> specs;
  int count = 0;
};

struct ALRunConfig {
  std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  std::vector<Mode> modes = {Mode::FeedForward, Mode::Introspective};
  int rounds = 10;
  int query_batch = 200;
  int initial_random = 100;
  int bald_passes = 10;
  double bald_rate = 0.3;
  bool warm_start = false;
  int sensing_epochs = 0;  // 0 keeps the main recipe's epochs
  int head_epochs = 0;
  CorruptionSpec corrupted_test{CorruptionKind::GaussianNoise, 5, 0};
  int repeat = 1;
};

struct OodRunConfig {
  std::vector<std::string> sets = {"uniform-noise", "held-out-letters", "blobs"};
  int count = 1000;
  OodConfig scoring;
};

struct RunConfig {
  std::uint64_t seed = 7;
  unsigned workers = 1;
  DataConfig data;
  PipelineRecipe recipe;
  AugmentConfig augment;
  EvalConfig eval;
  ALRunConfig al;
  OodRunConfig ood;
};

// ---------------------------------------------------------------------------
// JSON mapping. Unknown keys and wrong types are configuration errors.

namespace config_detail {

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <typename F>
  void with(const char* key, F&& f) {
    seen_.push_back(key);
    if (j_.contains(key)) f(j_.at(key), where(key));
  }

  template <typename F>
  void object(const char* key, F&& f) {
    with(key, [&](const nlohmann::json& v, const std::string& p) {
      Reader r(v, p);
      f(r);
      r.finish();
    });
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) throw ConfigError("unknown key " + where(k.c_str()));
  }

  std::string where(const char* key = nullptr) const {
    std::string p = path_.empty() ? "<root>" : path_;
    return key ? (path_.empty() ? std::string(key) : path_ + "." + key) : p;
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <typename T, typename Parse>
std::vector<T> parse_list(const nlohmann::json& v, const std::string& where, Parse parse) {
  if (!v.is_array()) throw ConfigError(where + " must be an array");
  std::vector<T> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(where + " entries must be strings");
    try {
      out.push_back(parse(e.get<std::string>()));
    } catch (const ParameterError& err) {
      throw ConfigError(where + ": " + err.what());
    }
  }
  return out;
}

inline void read_train(Reader& r, TrainConfig& t) {
  r.get("epochs", t.epochs);
  r.get("momentum", t.momentum);
  r.get("weight_decay", t.weight_decay);
  r.get("batch_size", t.batch_size);
  r.get("dropout_rate", t.dropout_rate);
  bool scaled = false;
  double base_lr = 0.1;
  r.get("base_lr", base_lr);
  r.with("lr_schedule", [&](const nlohmann::json& v, const std::string& where) {
    if (v.is_string() && v.get<std::string>() == "scaled") {
      scaled = true;
      return;
    }
    try {
      t.lr_schedule = v.get<std::vector<std::pair<int, double>>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where + " must be \"scaled\" or a list of [epoch, rate] pairs");
    }
  });
  if (scaled) t.lr_schedule = TrainConfig::scaled_schedule(t.epochs, base_lr);
}

inline nlohmann::json write_train(const TrainConfig& t) {
  return {{"epochs", t.epochs},         {"momentum", t.momentum},         {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size}, {"dropout_rate", t.dropout_rate}, {"lr_schedule", t.lr_schedule}};
}

inline CorruptionSpec read_corruption(const nlohmann::json& v, const std::string& where) {
  Reader r(v, where);
  std::string kind;
  CorruptionSpec s;
  r.get("kind", kind);
  r.get("severity", s.severity);
  r.finish();
  try {
    s.kind = corruption_from_string(kind);
  } catch (const ParameterError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (s.severity < 1 || s.severity > 5) throw ConfigError(where + ".severity must lie in [1,5]");
  return s;
}

template <typename T>
std::vector<std::string> names(const std::vector<T>& v) {
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(to_string(e));
  return out;
}

}  // namespace config_detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  RunConfig c;
  Reader root(j, "");
  root.get("seed", c.seed);
  root.get("workers", c.workers);
  root.object("data", [&](Reader& r) {
    r.get("source", c.data.source);
    r.get("train_per_class", c.data.train_per_class);
    r.get("test_per_class", c.data.test_per_class);
    r.get("image_size", c.data.image_size);
    r.get("blob_classes", c.data.blob_classes);
    r.get("blob_dim", c.data.blob_dim);
    r.get("blob_spread", c.data.blob_spread);
    r.get("train_images", c.data.train_images);
    r.get("train_labels", c.data.train_labels);
    r.get("test_images", c.data.test_images);
    r.get("test_labels", c.data.test_labels);
    r.get("train_csv", c.data.train_csv);
    r.get("test_csv", c.data.test_csv);
    r.get("csv_height", c.data.csv_shape.height);
    r.get("csv_width", c.data.csv_shape.width);
    r.get("csv_channels", c.data.csv_shape.channels);
  });
  auto& rec = c.recipe;
  root.object("sensing", [&](Reader& r) {
    std::string act = to_string(rec.sensing_activation);
    r.get("hidden", rec.sensing_hidden);
    r.get("activation", act);
    rec.sensing_activation = activation_from_string(act);
    r.object("train", [&](Reader& t) { read_train(t, rec.sensing_train); });
  });
  root.object("head", [&](Reader& r) {
    std::string act = to_string(rec.head_activation);
    r.get("hidden", rec.head_hidden);
    r.get("activation", act);
    rec.head_activation = activation_from_string(act);
    r.object("train", [&](Reader& t) { read_train(t, rec.head_train); });
  });
  std::string loss = to_string(rec.extraction);
  root.get("extraction_loss", loss);
  try {
    rec.extraction = loss_kind_from_string(loss);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("extraction_loss: ") + e.what());
  }
  root.get("held_out_fraction", rec.held_out_fraction);
  root.object("augment", [&](Reader& r) {
    r.get("count", c.augment.count);
    r.with("corruptions", [&](const nlohmann::json& v, const std::string& where) {
      if (!v.is_array()) throw ConfigError(where + " must be an array");
      c.augment.specs.clear();
      for (std::size_t i = 0; i < v.size(); ++i)
        c.augment.specs.push_back(read_corruption(v[i], where + "[" + std::to_string(i) + "]"));
    });
  });
  root.object("eval", [&](Reader& r) {
    r.with("corruptions", [&](const nlohmann::json& v, const std::string& w) {
      c.eval.corruptions = parse_list<CorruptionKind>(v, w, corruption_from_string);
    });
    r.get("severity_min", c.eval.severity_min);
    r.get("severity_max", c.eval.severity_max);
    std::string bins = c.eval.bins == BinReference::Midpoint ? "midpoint" : "mean-confidence";
    r.get("bins", bins);
    if (bins != "midpoint" && bins != "mean-confidence") throw ConfigError("eval.bins must be midpoint or mean-confidence");
    c.eval.bins = bins == "midpoint" ? BinReference::Midpoint : BinReference::MeanConfidence;
  });
  root.object("al", [&](Reader& r) {
    r.with("strategies", [&](const nlohmann::json& v, const std::string& w) {
      c.al.strategies = parse_list<Strategy>(v, w, strategy_from_string);
    });
    r.with("modes", [&](const nlohmann::json& v, const std::string& w) {
      c.al.modes = parse_list<Mode>(v, w, mode_from_string);
    });
    r.get("rounds", c.al.rounds);
    r.get("query_batch", c.al.query_batch);
    r.get("initial_random", c.al.initial_random);
    r.get("bald_passes", c.al.bald_passes);
    r.get("bald_rate", c.al.bald_rate);
    r.get("warm_start", c.al.warm_start);
    r.get("sensing_epochs", c.al.sensing_epochs);
    r.get("head_epochs", c.al.head_epochs);
    r.get("repeat", c.al.repeat);
    r.with("corrupted_test", [&](const nlohmann::json& v, const std::string& w) {
      c.al.corrupted_test = read_corruption(v, w);
    });
  });
  root.object("ood", [&](Reader& r) {
    r.get("sets", c.ood.sets);
    r.get("count", c.ood.count);
    r.with("methods", [&](const nlohmann::json& v, const std::string& w) {
      c.ood.scoring.methods = parse_list<OodMethod>(v, w, ood_method_from_string);
    });
    r.with("modes", [&](const nlohmann::json& v, const std::string& w) {
      c.ood.scoring.modes = parse_list<Mode>(v, w, mode_from_string);
    });
    r.get("temperature", c.ood.scoring.temperature);
    r.get("epsilon", c.ood.scoring.epsilon);
    r.get("adversarial", c.ood.scoring.adversarial);
    r.get("adversarial_epsilon", c.ood.scoring.adversarial_epsilon);
  });
  root.finish();

  if (c.workers == 0) c.workers = std::max(1u, std::thread::hardware_concurrency());
  if (c.eval.severity_min < 1 || c.eval.severity_max > 5 || c.eval.severity_min > c.eval.severity_max)
    throw ConfigError("eval severities must satisfy 1 <= severity_min <= severity_max <= 5");
  if (c.al.repeat < 1) throw ConfigError("al.repeat must be at least 1");
  if (c.ood.count < 1) throw ConfigError("ood.count must be positive");
  for (const auto& s : c.ood.sets)
    if (s != "uniform-noise" && s != "held-out-letters" && s != "blobs" && s != "self")
      throw ConfigError("unknown OOD set '" + s + "'");
  try {
    rec.sensing_train.validate();
    rec.head_train.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (rec.held_out_fraction < 0.0 || rec.held_out_fraction >= 1.0)
    throw ConfigError("held_out_fraction must lie in [0,1)");
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  using namespace config_detail;
  const auto& r = c.recipe;
  nlohmann::json aug = nlohmann::json::array();
  for (const auto& s : c.augment.specs) aug.push_back({{"kind", to_string(s.kind)}, {"severity", s.severity}});
  nlohmann::json ood_scoring_methods = nlohmann::json::array();
  for (auto m : c.ood.scoring.methods) ood_scoring_methods.push_back(to_string(m));
  return {
      {"seed", c.seed},
      {"workers", c.workers},
      {"data",
       {{"source", c.data.source},
        {"train_per_class", c.data.train_per_class},
        {"test_per_class", c.data.test_per_class},
        {"image_size", c.data.image_size},
        {"blob_classes", c.data.blob_classes},
        {"blob_dim", c.data.blob_dim},
        {"blob_spread", c.data.blob_spread},
        {"train_images", c.data.train_images},
        {"train_labels", c.data.train_labels},
        {"test_images", c.data.test_images},
        {"test_labels", c.data.test_labels},
        {"train_csv", c.data.train_csv},
        {"test_csv", c.data.test_csv},
        {"csv_height", c.data.csv_shape.height},
        {"csv_width", c.data.csv_shape.width},
        {"csv_channels", c.data.csv_shape.channels}}},
      {"sensing",
       {{"hidden", r.sensing_hidden}, {"activation", to_string(r.sensing_activation)}, {"train", write_train(r.sensing_train)}}},
      {"head", {{"hidden", r.head_hidden}, {"activation", to_string(r.head_activation)}, {"train", write_train(r.head_train)}}},
      {"extraction_loss", to_string(r.extraction)},
      {"held_out_fraction", r.held_out_fraction},
      {"augment", {{"count", c.augment.count}, {"corruptions", aug}}},
      {"eval",
       {{"corruptions", names(c.eval.corruptions)},
        {"severity_min", c.eval.severity_min},
        {"severity_max", c.eval.severity_max},
        {"bins", c.eval.bins == BinReference::Midpoint ? "midpoint" : "mean-confidence"}}},
      {"al",
       {{"strategies", names(c.al.strategies)},
        {"modes", names(c.al.modes)},
        {"rounds", c.al.rounds},
        {"query_batch", c.al.query_batch},
        {"initial_random", c.al.initial_random},
        {"bald_passes", c.al.bald_passes},
        {"bald_rate", c.al.bald_rate},
        {"warm_start", c.al.warm_start},
        {"sensing_epochs", c.al.sensing_epochs},
        {"head_epochs", c.al.head_epochs},
        {"repeat", c.al.repeat},
        {"corrupted_test", {{"kind", to_string(c.al.corrupted_test.kind)}, {"severity", c.al.corrupted_test.severity}}}}},
      {"ood",
       {{"sets", c.ood.sets},
        {"count", c.ood.count},
        {"methods", ood_scoring_methods},
        {"modes", names(c.ood.scoring.modes)},
        {"temperature", c.ood.scoring.temperature},
        {"epsilon", c.ood.scoring.epsilon},
        {"adversarial", c.ood.scoring.adversarial},
        {"adversarial_epsilon", c.ood.scoring.adversarial_epsilon}}},
  };
}

/// Parses a config file. Syntax errors report line and column.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    const auto nl = text.rfind('\n', upto == 0 ? 0 : upto - 1);
    const auto col = upto - (nl == std::string::npos ? 0 : nl + 1);
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stages

struct DataSplits {
  LabeledDataset train_raw;  // pixels in [0,1] for image sources
  LabeledDataset test_raw;
  ChannelStats stats;        // from train_raw (after augmentation)
  LabeledDataset train;      // normalized
  LabeledDataset test;       // normalized
};

inline DataSplits load_data(const RunConfig& c) {
  DataSplits d;
  const auto& dc = c.data;
  if (dc.source == "synth-digits") {
    d.train_raw = synth_digits(dc.train_per_class, derive_seed(c.seed, "data-train"), dc.image_size);
    d.test_raw = synth_digits(dc.test_per_class, derive_seed(c.seed, "data-test"), dc.image_size);
  } else if (dc.source == "synth-blobs") {
    // Train and test share centers (same seed); test samples come from a disjoint draw.
    const LabeledDataset all = synth_blobs(dc.blob_classes, dc.blob_dim, dc.train_per_class + dc.test_per_class,
                                           dc.blob_spread, derive_seed(c.seed, "data-train"));
    const double frac = static_cast<double>(dc.test_per_class) / (dc.train_per_class + dc.test_per_class);
    std::tie(d.train_raw, d.test_raw) = split(all, frac, derive_seed(c.seed, "data-test"));
  } else if (dc.source == "idx") {
    d.train_raw = load_idx(dc.train_images, dc.train_labels);
    d.test_raw = load_idx(dc.test_images, dc.test_labels);
  } else if (dc.source == "csv") {
    d.train_raw = load_csv(dc.train_csv, dc.csv_shape);
    d.test_raw = load_csv(dc.test_csv, dc.csv_shape);
    const int classes = std::max(d.train_raw.num_classes, d.test_raw.num_classes);
    d.train_raw.num_classes = d.test_raw.num_classes = classes;
  } else {
    throw ConfigError("unknown data.source '" + dc.source + "'");
  }
  if (d.train_raw.dim() != d.test_raw.dim()) throw ShapeError("train and test sets differ in dimensionality");
  if (c.augment.count > 0 && !c.augment.specs.empty()) {
    std::vector<CorruptionSpec> specs = c.augment.specs;
    for (auto& s : specs) s.seed = condition_seed(derive_seed(c.seed, "augment"), s.kind, s.severity);
    d.train_raw = augment_with_noise(d.train_raw, specs, c.augment.count, derive_seed(c.seed, "augment"));
  }
  d.stats = channel_stats(d.train_raw);
  d.train = normalize(d.train_raw, d.stats);
  d.test = normalize(d.test_raw, d.stats);
  return d;
}

inline PipelineRecipe effective_recipe(const RunConfig& c) {
  PipelineRecipe r = c.recipe;
  r.workers = c.workers;
  return r;
}

inline std::string curve_csv(std::span<const EpochStats> curve) {
  std::string out = "epoch,loss,accuracy,learning_rate\n";
  for (const auto& e : curve)
    out += std::to_string(e.epoch) + "," + io::format_double(e.loss) + "," + io::format_double(e.accuracy) + "," +
           io::format_double(e.learning_rate) + "\n";
  return out;
}

inline EvalReport run_evaluation(const RunConfig& c, const TwoStagePipeline& p, const DataSplits& d) {
  EvalOptions opts;
  opts.seed = derive_seed(c.seed, "corruption");
  opts.workers = c.workers;
  opts.bins = c.eval.bins;
  return evaluate(p, d.test_raw, all_conditions(c.eval.corruptions, c.eval.severity_min, c.eval.severity_max), opts);
}

/// Named OOD sets in model space, generated from the "ood" stream.
inline std::vector<OodSet> build_ood_sets(const RunConfig& c, const DataSplits& d) {
  const std::uint64_t s = derive_seed(c.seed, "ood");
  std::vector<OodSet> out;
  for (const auto& name : c.ood.sets) {
    LabeledDataset raw;
    if (name == "uniform-noise") {
      raw = uniform_noise_images(d.test_raw, c.ood.count, derive_seed(s, name));
    } else if (name == "held-out-letters") {
      if (!d.test_raw.shape.is_image() || d.test_raw.shape.height != d.test_raw.shape.width ||
          d.test_raw.shape.channels != 1)
        throw ShapeError("held-out-letters needs square single-channel images");
      const int per = std::max(1, c.ood.count / 10);
      raw = synth_letters(per, derive_seed(s, name), d.test_raw.shape.height);
    } else if (name == "blobs") {
      const int per = std::max(1, c.ood.count / 10);
      raw = synth_blobs(10, static_cast<int>(d.test_raw.dim()), per, 0.1, derive_seed(s, name));
      raw.samples = raw.samples.cwiseMax(0.0).cwiseMin(1.0);
      raw.shape = d.test_raw.shape;
    } else if (name == "self") {
      raw = d.test_raw;
    }
    out.push_back({name, normalize(raw, d.stats).samples});
  }
  return out;
}

struct ActiveLearningRun {
  std::vector<ALRow> rows;
  std::vector<int> repeat_index;  // parallel to rows
};

inline ActiveLearningRun run_al_suite(const RunConfig& c, const DataSplits& d) {
  PipelineRecipe recipe = effective_recipe(c);
  if (c.al.sensing_epochs > 0) {
    recipe.sensing_train.epochs = c.al.sensing_epochs;
    recipe.sensing_train.lr_schedule =
        TrainConfig::scaled_schedule(c.al.sensing_epochs, recipe.sensing_train.lr_schedule.front().second);
  }
  if (c.al.head_epochs > 0) {
    recipe.head_train.epochs = c.al.head_epochs;
    recipe.head_train.lr_schedule =
        TrainConfig::scaled_schedule(c.al.head_epochs, recipe.head_train.lr_schedule.front().second);
  }
  CorruptionSpec cs = c.al.corrupted_test;
  cs.seed = condition_seed(derive_seed(c.seed, "corruption"), cs.kind, cs.severity);
  const LabeledDataset corrupted = normalize(corrupt(d.test_raw, cs), d.stats);

  ActiveLearningRun out;
  for (int rep = 0; rep < c.al.repeat; ++rep) {
    const std::uint64_t base = rep == 0 ? derive_seed(c.seed, "al") : derive_seed(derive_seed(c.seed, "al"), "repeat-" + std::to_string(rep));
    for (Strategy s : c.al.strategies)
      for (Mode m : c.al.modes) {
        ALConfig cfg;
        cfg.strategy = s;
        cfg.mode = m;
        cfg.rounds = c.al.rounds;
        cfg.query_batch = c.al.query_batch;
        cfg.initial_random = c.al.initial_random;
        cfg.seed = base;
        cfg.bald_passes = c.al.bald_passes;
        cfg.bald_rate = c.al.bald_rate;
        cfg.warm_start = c.al.warm_start;
        const ALResult r = run_active_learning(d.train, d.test, corrupted, recipe, cfg, d.stats);
        out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
        out.repeat_index.insert(out.repeat_index.end(), r.rows.size(), rep);
      }
  }
  return out;
}

/// Per-round CSV; a leading `repeat` column appears only when more than one repeat ran.
inline std::string al_suite_csv(const ActiveLearningRun& run, int repeats) {
  if (repeats <= 1) return al_rows_csv(run.rows);
  const std::string plain = al_rows_csv(run.rows);
  std::string out = "repeat," + plain.substr(0, plain.find('\n') + 1);
  std::size_t pos = plain.find('\n') + 1;
  for (std::size_t i = 0; i < run.rows.size(); ++i) {
    const std::size_t end = plain.find('\n', pos);
    out += std::to_string(run.repeat_index[i]) + "," + plain.substr(pos, end - pos + 1);
    pos = end + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

/// Records every output file with its SHA-256. Paths are relative to the output dir
/// and sorted, so the manifest is byte-stable across reruns.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path root) : root_(std::move(root)) {}

  void add(const std::string& relative) { files_[relative] = io::file_sha256(root_ / relative); }
  void section(const std::string& name) { sections_.push_back(name); }

  /// Writes `bytes` under the output dir and records it.
  void write(const std::string& relative, std::string_view bytes) {
    io::write_file(root_ / relative, bytes);
    add(relative);
  }

  nlohmann::json to_json() const {
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [k, v] : files_) files[k] = v;
    return {{"format", "introspect-manifest"}, {"version", 1}, {"sections", sections_}, {"files", files}};
  }

  void save(const std::string& name = "manifest.json") const { io::write_file(root_ / name, to_json().dump(2) + "\n"); }

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> files_;
  std::vector<std::string> sections_;
};

}  // namespace introspect
