// introspect: batch front end for the two-stage pipeline.
//
// Exit codes: 0 success, 1 usage/config error, 2 data/format error, 3 numeric divergence.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "introspect/introspect.hpp"

namespace fs = std::filesystem;
using namespace introspect;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<unsigned> workers;
  std::optional<std::string> loss;
  std::optional<double> held_out_fraction;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON run configuration (defaults apply when omitted)");
  cmd->add_option("--seed", o.seed, "global seed (overrides config)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--workers", o.workers, "worker threads (0 = all cores)");
  cmd->add_option("--loss", o.loss, "extraction loss")->check(CLI::IsMember({"ce", "mse-m"}));
  cmd->add_option("--held-out-fraction", o.held_out_fraction, "fraction of training data reserved for the head");
}

/// Config file (or defaults) with command-line overrides applied.
RunConfig resolve(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? run_config_from_json(nlohmann::json::object()) : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : *o.workers;
  if (o.loss) c.recipe.extraction = loss_kind_from_string(*o.loss);
  if (o.held_out_fraction) {
    if (*o.held_out_fraction < 0.0 || *o.held_out_fraction >= 1.0)
      throw ConfigError("--held-out-fraction must lie in [0,1)");
    c.recipe.held_out_fraction = *o.held_out_fraction;
  }
  return c;
}

std::string stage = "setup";
const auto started = std::chrono::steady_clock::now();

void log(const std::string& msg) {
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::fprintf(stderr, "[%7.1fs %s] %s\n", s, stage.c_str(), msg.c_str());
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string pad_epoch(int e) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", e);
  return buf;
}

// ---------------------------------------------------------------------------
// Stage bodies shared by the individual subcommands and `pipeline`.

struct SenseOutputs {
  FitResult fit;
  double test_accuracy = 0.0;
};

SenseOutputs stage_train_sense(const RunConfig& c, const DataSplits& d, Manifest& m, int checkpoint_every) {
  stage = "train-sense";
  PipelineRecipe r = effective_recipe(c);
  r.fit_head = false;
  TrainHooks hooks;
  hooks.checkpoint_every = checkpoint_every;
  std::vector<std::string> written;
  hooks.on_checkpoint = [&](int epoch, const Network& net) {
    const std::string rel = "checkpoints/sensing_epoch_" + pad_epoch(epoch) + ".json";
    save_network(net, m.root() / rel);
    written.push_back(rel);
  };
  SenseOutputs o;
  o.fit = fit_pipeline(r, d.train, d.stats, c.seed, nullptr, hooks);
  for (const auto& rel : written) m.add(rel);
  o.test_accuracy = accuracy(o.fit.pipeline.sensing, d.test.samples, d.test.labels);
  save_network(o.fit.pipeline.sensing, m.root() / "sensing.json");
  m.add("sensing.json");
  m.write("sensing_curve.csv", curve_csv(o.fit.sensing_curve));
  nlohmann::json metrics{{"train_accuracy", o.fit.sensing_train_accuracy},
                         {"test_accuracy", o.test_accuracy},
                         {"epochs", r.sensing_train.epochs},
                         {"extraction_loss", to_string(o.fit.pipeline.extraction.kind)}};
  if (o.fit.pipeline.extraction.kind == LossKind::MseM) metrics["m_scale"] = o.fit.pipeline.extraction.m_scale;
  m.write("sensing_metrics.json", dump(metrics));
  log("test accuracy " + io::format_double(o.test_accuracy));
  return o;
}

/// Oracle comparison: max over probes and columns of the inf-norm deviation.
double oracle_deviation(const Network& net, const Matrix& samples, const LossSpec& spec) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    const Vector x = samples.col(i);
    const Matrix fast = extract_fast_raw(net, x, spec);
    const auto exact = extract_exact(net, x, spec);
    for (std::size_t j = 0; j < exact.size(); ++j)
      worst = std::max(worst, (fast.col(static_cast<Eigen::Index>(j)) - exact[j]).cwiseAbs().maxCoeff());
  }
  return worst;
}

void stage_extract(const Network& net, const LossSpec& spec, const LabeledDataset& ds, const std::string& ckpt_hash,
                   const std::string& rel, const std::string& encoding, unsigned workers, Manifest& m) {
  stage = "extract";
  FeatureTable t;
  t.features = extract_feature_matrix(net, ds.samples, spec, workers);
  t.labels = ds.labels;
  t.meta.penultimate_dim = net.penultimate_dim();
  t.meta.num_classes = net.num_classes();
  t.meta.loss = spec;
  t.meta.checkpoint_sha256 = ckpt_hash;
  t.meta.encoding = encoding;
  save_feature_table(t, m.root() / rel);
  m.add(rel);
  m.add(sidecar_path(rel).string());
  log("wrote " + std::to_string(ds.size()) + " feature rows");
}

void stage_eval(const RunConfig& c, const TwoStagePipeline& p, const DataSplits& d, Manifest& m) {
  stage = "eval";
  const EvalReport report = run_evaluation(c, p, d);
  m.write("eval.csv", eval_report_csv(report));
  m.write("eval.json", dump(eval_report_json(report)));
  m.write("eval_plot.csv", eval_plot_csv(report));
  const auto* ff = report.find("clean", 0, Mode::FeedForward);
  const auto* in = report.find("clean", 0, Mode::Introspective);
  log("clean accuracy ff " + io::format_double(ff->accuracy) + " intro " + io::format_double(in->accuracy));
}

void stage_al(const RunConfig& c, const DataSplits& d, Manifest& m) {
  stage = "al";
  const ActiveLearningRun run = run_al_suite(c, d);
  m.write("al.csv", al_suite_csv(run, c.al.repeat));
  log(std::to_string(run.rows.size()) + " rows");
}

void stage_ood(const RunConfig& c, const TwoStagePipeline& p, const DataSplits& d, Manifest& m) {
  stage = "ood";
  const auto sets = build_ood_sets(c, d);
  const auto rows = run_ood(p, d.test.samples, sets, c.ood.scoring);
  m.write("ood.csv", ood_rows_csv(rows));
  m.write("ood.json", dump({{"rows", ood_rows_json(rows)},
                            {"note", "desk-scale stand-ins: uniform-noise, held-out-letters (unseen glyph classes), "
                                     "blobs (different synthetic distribution)"}}));
  log(std::to_string(rows.size()) + " rows");
}

Manifest open_output(const std::string& out, const RunConfig& c) {
  fs::create_directories(out);
  Manifest m(out);
  m.write("config.json", dump(to_json(c)));
  return m;
}

// ---------------------------------------------------------------------------
// Benchmark

struct Latency {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
};

Latency summarize(std::vector<double> ms) {
  Latency l;
  if (ms.empty()) return l;
  std::sort(ms.begin(), ms.end());
  for (double v : ms) l.mean_ms += v;
  l.mean_ms /= static_cast<double>(ms.size());
  auto pct = [&](double q) { return ms[std::min(ms.size() - 1, static_cast<std::size_t>(q * static_cast<double>(ms.size())))]; };
  l.p50_ms = pct(0.5);
  l.p95_ms = pct(0.95);
  return l;
}

nlohmann::json to_json(const Latency& l) { return {{"mean_ms", l.mean_ms}, {"p50_ms", l.p50_ms}, {"p95_ms", l.p95_ms}}; }

template <typename F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

nlohmann::json run_benchmark(const Network& net, const LossSpec& spec, int probes, unsigned workers, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix x(net.input_dim(), probes);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  std::vector<double> fast_ms, exact_ms;
  volatile double sink = 0.0;
  for (int i = 0; i < probes; ++i) {
    const Vector v = x.col(i);
    exact_ms.push_back(time_ms([&] { sink = sink + extract_exact(net, v, spec).front()(0); }));
    fast_ms.push_back(time_ms([&] { sink = sink + extract_fast(net, v, spec).matrix(0, 0); }));
  }
  const Latency fast = summarize(fast_ms), exact = summarize(exact_ms);
  const double single = time_ms([&] { extract_batch(net, x, spec, 1); });
  const double multi = time_ms([&] { extract_batch(net, x, spec, workers); });
  return {{"n_probes", probes},
          {"num_classes", net.num_classes()},
          {"penultimate_dim", net.penultimate_dim()},
          {"loss", to_string(spec.kind)},
          {"exact", to_json(exact)},
          {"fast", to_json(fast)},
          {"speedup", exact.mean_ms / fast.mean_ms},
          {"workers", workers},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"batch_single_worker_ms", single},
          {"batch_multi_worker_ms", multi},
          {"throughput_ratio", single / multi}};
}

LossSpec loss_for(const RunConfig& c, const Network& net, const DataSplits& d, std::optional<double> m_override) {
  if (c.recipe.extraction == LossKind::CrossEntropy) return LossSpec::cross_entropy();
  if (m_override) return LossSpec::mse_m(*m_override);
  const auto [f_data, h_data] = fit_splits(c.recipe, d.train, c.seed);
  return extraction_loss_for(LossKind::MseM, net, f_data.samples);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Introspective two-stage classifier: training, extraction, evaluation and analysis"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* sense = app.add_subcommand("train-sense", "train the sensing network f");
  add_common(sense, common);
  std::optional<int> epochs;
  int checkpoint_every = 0;
  sense->add_option("--epochs", epochs, "override sensing epochs");
  sense->add_option("--checkpoint-every", checkpoint_every, "write a checkpoint every k epochs");

  auto* extract = app.add_subcommand("extract", "write introspective features for a dataset split");
  add_common(extract, common);
  std::string checkpoint, split_name = "test", encoding = "csv";
  long limit = -1;
  std::optional<double> m_scale;
  bool oracle = false;
  extract->add_option("--checkpoint", checkpoint, "sensing checkpoint")->required();
  extract->add_option("--split", split_name, "train or test")->check(CLI::IsMember({"train", "test"}));
  extract->add_option("--limit", limit, "use at most this many samples (-1 = all)");
  extract->add_option("--m", m_scale, "explicit M for mse-m (default: training-set mean max logit)");
  extract->add_option("--encoding", encoding, "csv or f64")->check(CLI::IsMember({"csv", "f64"}));
  extract->add_flag("--oracle", oracle, "also run the N-pass oracle and report the max column deviation");

  auto* head = app.add_subcommand("train-head", "train the introspective head on a feature table");
  add_common(head, common);
  std::string features;
  head->add_option("--features", features, "feature table written by extract")->required();
  head->add_option("--checkpoint", checkpoint, "sensing checkpoint; when given, a pipeline bundle is written");

  auto* eval = app.add_subcommand("eval", "clean and corrupted evaluation of both predictors");
  add_common(eval, common);
  std::string bundle;
  eval->add_option("--pipeline", bundle, "pipeline bundle directory")->required();

  auto* al = app.add_subcommand("al", "active-learning suite");
  add_common(al, common);

  auto* ood = app.add_subcommand("ood", "out-of-distribution detection");
  add_common(ood, common);
  ood->add_option("--pipeline", bundle, "pipeline bundle directory")->required();
  bool adversarial = false;
  ood->add_flag("--adversarial", adversarial, "add one-step perturbed copies of every OOD set");

  auto* diag = app.add_subcommand("diag", "sparsity and Fisher-variance reports");
  add_common(diag, common);
  int probes = 200;
  double ridge = 1e-3;
  diag->add_option("--checkpoint", checkpoint, "sensing checkpoint")->required();
  diag->add_option("--probes", probes, "test samples to analyse");
  diag->add_option("--ridge", ridge, "Fisher ridge");

  auto* bench = app.add_subcommand("benchmark", "time the single-pass extraction against the N-pass oracle");
  add_common(bench, common);
  int classes = 10;
  int bench_probes = 1000;
  bench->add_option("--checkpoint", checkpoint, "sensing checkpoint (default: random 784-256-50-N net)");
  bench->add_option("--classes", classes, "N for the random net");
  bench->add_option("--probes", bench_probes, "number of probes");

  auto* pipe = app.add_subcommand("pipeline", "train f, extract, train H, evaluate, then AL and OOD");
  add_common(pipe, common);
  bool skip_al = false, skip_ood = false;
  pipe->add_flag("--skip-al", skip_al, "skip the active-learning stage");
  pipe->add_flag("--skip-ood", skip_ood, "skip the OOD stage");
  pipe->add_option("--checkpoint-every", checkpoint_every, "write a sensing checkpoint every k epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunConfig c = resolve(common);
    if (epochs) {
      if (*epochs < 0) throw ConfigError("--epochs must be non-negative");
      c.recipe.sensing_train.epochs = *epochs;
    }
    if (adversarial) c.ood.scoring.adversarial = true;

    if (*sense) {
      Manifest m = open_output(common.out, c);
      const DataSplits d = load_data(c);
      stage_train_sense(c, d, m, checkpoint_every);
      m.save();
    } else if (*extract) {
      Manifest m = open_output(common.out, c);
      const DataSplits d = load_data(c);
      const Network net = load_network(checkpoint);
      LabeledDataset ds = split_name == "train" ? d.train : d.test;
      if (limit >= 0 && limit < ds.size()) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(limit));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        ds = ds.subset(idx);
      }
      if (ds.dim() != net.input_dim()) throw ShapeError("checkpoint input does not match the dataset dimensionality");
      const LossSpec spec = loss_for(c, net, d, m_scale);
      const std::string rel = "features." + encoding;
      stage_extract(net, spec, ds, io::file_sha256(checkpoint), rel, encoding, c.workers, m);
      if (oracle) {
        const double dev = oracle_deviation(net, ds.samples, spec);
        m.write("oracle.json", dump({{"max_column_deviation", dev}, {"probes", ds.size()}}));
        log("max column deviation " + io::format_double(dev));
      }
      m.save();
    } else if (*head) {
      Manifest m = open_output(common.out, c);
      stage = "train-head";
      const FeatureTable t = load_feature_table(features);
      IntrospectiveHead h = build_head(static_cast<int>(t.meta.penultimate_dim), static_cast<int>(t.meta.num_classes),
                                       c.recipe.head_hidden, derive_seed(c.seed, "init-h"), c.recipe.head_activation);
      TrainConfig hcfg = c.recipe.head_train;
      hcfg.seed = derive_seed(c.seed, "train-h");
      const auto curve = train_head(h, t.features, t.labels, hcfg);
      save_network(h.network, m.root() / "head.json");
      m.add("head.json");
      m.write("head_curve.csv", curve_csv(curve));
      if (!checkpoint.empty()) {
        if (io::file_sha256(checkpoint) != t.meta.checkpoint_sha256)
          throw FormatError("feature table was not extracted from " + checkpoint);
        const DataSplits d = load_data(c);
        TwoStagePipeline p{load_network(checkpoint), t.meta.loss, h, d.stats};
        save_pipeline(p, m.root() / "pipeline");
        for (const char* f : {"pipeline/sensing.json", "pipeline/head.json", "pipeline/pipeline.json"}) m.add(f);
      }
      m.save();
    } else if (*eval) {
      Manifest m = open_output(common.out, c);
      const TwoStagePipeline p = load_pipeline(bundle);
      const DataSplits d = load_data(c);
      stage_eval(c, p, d, m);
      m.save();
    } else if (*al) {
      Manifest m = open_output(common.out, c);
      const DataSplits d = load_data(c);
      stage_al(c, d, m);
      m.save();
    } else if (*ood) {
      Manifest m = open_output(common.out, c);
      const TwoStagePipeline p = load_pipeline(bundle);
      const DataSplits d = load_data(c);
      stage_ood(c, p, d, m);
      m.save();
    } else if (*diag) {
      Manifest m = open_output(common.out, c);
      stage = "diag";
      const DataSplits d = load_data(c);
      const Network net = load_network(checkpoint);
      const Eigen::Index n = std::min<Eigen::Index>(probes, d.test.size());
      const Matrix x = d.test.samples.leftCols(n);
      // Sparsity is measured under cross-entropy; the Fisher report uses the configured loss.
      const SparsityReport sr = sparsity_report(net, x, LossSpec::cross_entropy());
      nlohmann::json per_class = nlohmann::json::array();
      for (Eigen::Index i = 0; i < net.num_classes(); ++i) {
        double s = 0.0;
        for (const auto& p : sr.probes) s += p.ratios[static_cast<std::size_t>(i)];
        per_class.push_back(s / static_cast<double>(sr.probes.size()));
      }
      m.write("sparsity.json", dump({{"loss", "ce"},
                                     {"probes", n},
                                     {"mean_off_support_ratio", sr.mean_ratio()},
                                     {"mean_ratio_per_class", per_class}}));
      const LossSpec spec = loss_for(c, net, d, std::nullopt);
      const auto feats = extract_batch(net, x, spec, c.workers);
      const FisherMetric fm(feats, net.penultimate_dim(), ridge);
      std::vector<double> scores;
      for (const auto& f : feats) scores.push_back(fm.score(f.matrix));
      double mean = 0.0;
      for (double s : scores) mean += s;
      mean /= static_cast<double>(std::max<std::size_t>(1, scores.size()));
      m.write("fisher.json", dump({{"loss", to_string(spec.kind)},
                                   {"ridge", ridge},
                                   {"probes", n},
                                   {"mean_variance_score", mean},
                                   {"scores", scores}}));
      log("mean off-support ratio " + io::format_double(sr.mean_ratio()));
      m.save();
    } else if (*bench) {
      stage = "benchmark";
      fs::create_directories(common.out);
      io::write_file(fs::path(common.out) / "config.json", dump(to_json(c)));
      const Network net = checkpoint.empty()
                              ? Network::make({784, 256, 50, classes}, Activation::ReLU, derive_seed(c.seed, "bench"))
                              : load_network(checkpoint);
      const LossSpec spec =
          c.recipe.extraction == LossKind::MseM ? LossSpec::mse_m(1.0) : LossSpec::cross_entropy();
      const nlohmann::json report = run_benchmark(net, spec, bench_probes, c.workers, derive_seed(c.seed, "bench-probes"));
      io::write_file(fs::path(common.out) / "benchmark.json", dump(report));
      std::cout << report.dump(2) << "\n";
    } else if (*pipe) {
      Manifest m = open_output(common.out, c);
      stage = "data";
      const DataSplits d = load_data(c);
      SenseOutputs sense_out = stage_train_sense(c, d, m, checkpoint_every);
      TwoStagePipeline p = sense_out.fit.pipeline;
      m.section("train-sense");

      stage_extract(p.sensing, p.extraction, d.test, io::file_sha256(m.root() / "sensing.json"), "features_test.f64",
                    "f64", c.workers, m);
      m.section("extract");

      stage = "train-head";
      const auto [f_data, h_data] = fit_splits(c.recipe, d.train, c.seed);
      const Matrix hf = extract_feature_matrix(p.sensing, h_data.samples, p.extraction, c.workers);
      p.head = build_head(static_cast<int>(p.sensing.penultimate_dim()), static_cast<int>(p.sensing.num_classes()),
                          c.recipe.head_hidden, derive_seed(c.seed, "init-h"), c.recipe.head_activation);
      TrainConfig hcfg = c.recipe.head_train;
      hcfg.seed = derive_seed(c.seed, "train-h");
      m.write("head_curve.csv", curve_csv(train_head(p.head, hf, h_data.labels, hcfg)));
      save_pipeline(p, m.root() / "pipeline");
      for (const char* f : {"pipeline/sensing.json", "pipeline/head.json", "pipeline/pipeline.json"}) m.add(f);
      m.section("train-head");

      stage_eval(c, p, d, m);
      m.section("eval");
      if (!skip_al) {
        stage_al(c, d, m);
        m.section("al");
      }
      if (!skip_ood) {
        stage_ood(c, p, d, m);
        m.section("ood");
      }
      m.save();
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParameterError& e) {
    std::cerr << "error in stage " << stage << ": " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error in stage " << stage << ": " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "data error in stage " << stage << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error in stage " << stage << ": " << e.what() << "\n";
    return 2;
  }
}
