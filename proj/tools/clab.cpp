// clab: reproducible temperature experiments on synthetic hypersphere data.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "clab/clab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kArtifactVersion = "clab 1.0.0";

const std::vector<double> kDefaultTaus = {0.05, 0.07, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

/// A flag problem discovered after CLI11 parsing; exits with status 2.
struct UsageError {
  std::string flag;
  std::string message;
};

json number_or_inf(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

double read_number_or_inf(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

std::string_view tolerance_form_name(clab::ToleranceForm f) {
  return f == clab::ToleranceForm::SameClassMean ? "same-class-mean" : "masked-mean-all-pairs";
}

clab::ToleranceForm parse_tolerance_form(const std::string& s) {
  if (s == "same-class-mean") return clab::ToleranceForm::SameClassMean;
  if (s == "masked-mean-all-pairs") return clab::ToleranceForm::MaskedMeanAllPairs;
  throw UsageError{"--tolerance-form", "unknown tolerance form '" + s + "'"};
}

std::string_view positive_source_name(clab::PositiveSource p) {
  return p == clab::PositiveSource::Bank ? "bank" : "fresh-view";
}

clab::PositiveSource parse_positive_source(const std::string& s) {
  if (s == "bank") return clab::PositiveSource::Bank;
  if (s == "fresh-view") return clab::PositiveSource::FreshView;
  throw UsageError{"--positive-source", "unknown positive source '" + s + "'"};
}

clab::ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return clab::ReportFormat::Csv;
  if (s == "json") return clab::ReportFormat::Json;
  throw UsageError{"--format", "unknown report format '" + s + "'"};
}

std::uint64_t default_seed() {
  const char* env = std::getenv("CLAB_SEED");
  if (!env || !*env) return 0;
  std::uint64_t v = 0;
  const std::string s(env);
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw UsageError{"CLAB_SEED", "environment variable CLAB_SEED is not an unsigned integer: '" + s + "'"};
  }
  return v;
}

std::vector<std::pair<std::size_t, double>> parse_schedule(const std::string& text) {
  std::vector<std::pair<std::size_t, double>> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, comma - start);
    const std::size_t colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("missing ':'");
      std::size_t used = 0;
      const unsigned long long step = std::stoull(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("bad step");
      const std::string mult = item.substr(colon + 1);
      const double m = std::stod(mult, &used);
      if (used != mult.size()) throw std::invalid_argument("bad multiplier");
      out.emplace_back(static_cast<std::size_t>(step), m);
    } catch (const std::exception&) {
      throw UsageError{"--lr-schedule", "expected STEP:MULT[,STEP:MULT...], got '" + item + "'"};
    }
    start = comma + 1;
  }
  return out;
}

/// Flags shared by train and sweep.
struct ExperimentFlags {
  std::string variant = "contrastive";
  double tau = 0.2;
  double alpha = 0.0819;
  std::optional<double> lambda;
  std::size_t steps = clab::TrainConfig{}.steps;
  std::size_t batch_size = clab::TrainConfig{}.batch_size;
  double lr = clab::TrainConfig{}.learning_rate;
  std::string lr_schedule;
  double momentum = *clab::TrainConfig{}.memory_bank_momentum;
  bool no_bank = false;
  std::string positive_source = "bank";
  double kappa_aug = clab::TrainConfig{}.kappa_aug;
  std::size_t metric_every = clab::TrainConfig{}.metric_every;
  std::size_t knn_k = clab::TrainConfig{}.knn_k;
  double uniformity_t = 2.0;
  std::string tolerance_form = "same-class-mean";
  std::size_t dim = clab::SynthConfig{}.dim;
  std::size_t classes = clab::SynthConfig{}.num_classes;
  std::size_t points_per_class = clab::SynthConfig{}.points_per_class;
  double kappa_class = clab::SynthConfig{}.kappa_class;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
  std::string format = "csv";
  std::vector<CLI::Option*> config_options;  // rejected together with --manifest
};

CLI::Validator finite_non_negative() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        const double v = std::stod(s);
        return (std::isfinite(v) && v >= 0.0) ? "" : "must be a finite number >= 0";
      },
      "NONNEG");
}

CLI::Validator kappa_value() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        const double v = std::stod(s);
        return (v >= 0.0 && !std::isnan(v)) ? "" : "must be >= 0 or inf";
      },
      "KAPPA");
}

CLI::Validator positive_finite() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        const double v = std::stod(s);
        return (std::isfinite(v) && v > 0.0) ? "" : "must be a positive finite number";
      },
      "POS");
}

void add_experiment_flags(CLI::App& app, ExperimentFlags& f, Common& c, bool with_tau) {
  auto track = [&](CLI::Option* o) { c.config_options.push_back(o); return o; };
  track(app.add_option("--variant", f.variant, "contrastive|simple|hard|hard-simple|triplet-limit|taylor-limit")
            ->capture_default_str());
  if (with_tau) track(app.add_option("--tau", f.tau, "temperature")->check(positive_finite())->capture_default_str());
  track(app.add_option("--alpha", f.alpha, "hard negative fraction in (0, 1]")
            ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0))
            ->capture_default_str());
  track(app.add_option("--lambda", f.lambda, "negative weight of the simple losses (default 1/#negatives)")
            ->check(finite_non_negative()));
  track(app.add_option("--steps", f.steps, "training steps")->check(CLI::PositiveNumber)->capture_default_str());
  track(app.add_option("--batch-size", f.batch_size, "minibatch size")->check(CLI::Range(2, 1 << 30))
            ->capture_default_str());
  track(app.add_option("--lr", f.lr, "learning rate")->check(finite_non_negative())->capture_default_str());
  track(app.add_option("--lr-schedule", f.lr_schedule, "STEP:MULT,... multiplicative rate changes"));
  auto* momentum = track(app.add_option("--momentum", f.momentum, "memory bank EMA momentum in [0, 1)")
                             ->check(CLI::Range(0.0, std::nextafter(1.0, 0.0)))
                             ->capture_default_str());
  track(app.add_flag("--no-bank", f.no_bank, "train without a memory bank")->excludes(momentum));
  track(app.add_option("--positive-source", f.positive_source, "bank|fresh-view")->capture_default_str());
  track(app.add_option("--kappa-aug", f.kappa_aug, "augmentation concentration (inf disables)")
            ->check(kappa_value())
            ->capture_default_str());
  track(app.add_option("--metric-every", f.metric_every, "steps between snapshots")->check(CLI::PositiveNumber)
            ->capture_default_str());
  track(app.add_option("--knn-k", f.knn_k, "neighbours for knn purity")->check(CLI::PositiveNumber)
            ->capture_default_str());
  track(app.add_option("--uniformity-t", f.uniformity_t, "uniformity kernel scale")->check(positive_finite())
            ->capture_default_str());
  track(app.add_option("--tolerance-form", f.tolerance_form, "same-class-mean|masked-mean-all-pairs")
            ->capture_default_str());
  track(app.add_option("--dim", f.dim, "embedding dimension")->check(CLI::Range(2, 1 << 20))->capture_default_str());
  track(app.add_option("--classes", f.classes, "number of classes")->check(CLI::PositiveNumber)
            ->capture_default_str());
  track(app.add_option("--points-per-class", f.points_per_class, "instances per class")->check(CLI::PositiveNumber)
            ->capture_default_str());
  track(app.add_option("--kappa-class", f.kappa_class, "class concentration")->check(kappa_value())
            ->capture_default_str());
}

void add_common_flags(CLI::App& app, Common& c, bool with_format) {
  c.config_options.push_back(app.add_option("--seed", c.seed, "master seed (default: $CLAB_SEED or 0)"));
  app.add_option("--out", c.out, "output directory");
  if (with_format) {
    c.config_options.push_back(app.add_option("--format", c.format, "csv|json")->capture_default_str());
  }
  app.add_option("--manifest", c.manifest, "rerun from a manifest written by an earlier run");
}

/// Experiment description recovered either from flags or from a manifest.
struct Experiment {
  clab::SynthConfig synth;
  clab::TrainConfig train;
  clab::ReportFormat format = clab::ReportFormat::Csv;
};

Experiment experiment_from_flags(const ExperimentFlags& f, const Common& c) {
  Experiment e;
  const auto variant = clab::parse_variant(f.variant);
  if (!variant) throw UsageError{"--variant", "unknown variant '" + f.variant + "'"};
  e.synth.dim = f.dim;
  e.synth.num_classes = f.classes;
  e.synth.points_per_class = f.points_per_class;
  e.synth.kappa_class = f.kappa_class;
  e.synth.kappa_aug = f.kappa_aug;
  e.synth.seed = c.seed;

  auto& t = e.train;
  t.loss = clab::LossConfig{*variant, f.tau, f.alpha, f.lambda};
  t.steps = f.steps;
  t.batch_size = f.batch_size;
  t.learning_rate = f.lr;
  t.lr_schedule = parse_schedule(f.lr_schedule);
  if (f.no_bank) t.memory_bank_momentum.reset();
  else t.memory_bank_momentum = f.momentum;
  t.positive_source = parse_positive_source(f.positive_source);
  t.kappa_aug = f.kappa_aug;
  t.metric_every = f.metric_every;
  t.seed = c.seed;
  t.knn_k = f.knn_k;
  t.uniformity_t = f.uniformity_t;
  t.tolerance_form = parse_tolerance_form(f.tolerance_form);
  e.format = parse_format(c.format);

  const std::size_t n = e.synth.total();
  if (t.batch_size > n) throw UsageError{"--batch-size", "batch size exceeds the number of instances"};
  if (t.knn_k >= n) throw UsageError{"--knn-k", "k must be smaller than the number of instances"};
  for (std::size_t i = 1; i < t.lr_schedule.size(); ++i) {
    if (t.lr_schedule[i].first <= t.lr_schedule[i - 1].first) {
      throw UsageError{"--lr-schedule", "schedule steps must be strictly ascending"};
    }
  }
  for (const auto& entry : t.lr_schedule) {
    if (!(entry.second >= 0.0) || !std::isfinite(entry.second)) {
      throw UsageError{"--lr-schedule", "multipliers must be finite and >= 0"};
    }
  }
  return e;
}

json experiment_json(const Experiment& e) {
  const auto& t = e.train;
  json schedule = json::array();
  for (const auto& [step, mult] : t.lr_schedule) schedule.push_back({step, mult});
  json loss = {{"variant", std::string(clab::to_string(t.loss.variant))},
               {"tau", t.loss.tau},
               {"alpha", t.loss.alpha},
               {"lambda", nullptr}};
  if (clab::uses_lambda(t.loss.variant)) loss["lambda"] = clab::effective_lambda(t.loss, t.batch_size);
  return {
      {"synth",
       {{"dim", e.synth.dim},
        {"num_classes", e.synth.num_classes},
        {"points_per_class", e.synth.points_per_class},
        {"kappa_class", number_or_inf(e.synth.kappa_class)}}},
      {"loss", loss},
      {"train",
       {{"steps", t.steps},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"lr_schedule", schedule},
        {"memory_bank_momentum", t.memory_bank_momentum ? json(*t.memory_bank_momentum) : json(nullptr)},
        {"positive_source", std::string(positive_source_name(t.positive_source))},
        {"kappa_aug", number_or_inf(t.kappa_aug)},
        {"metric_every", t.metric_every},
        {"knn_k", t.knn_k},
        {"uniformity_t", t.uniformity_t},
        {"tolerance_form", std::string(tolerance_form_name(t.tolerance_form))}}},
      {"format", e.format == clab::ReportFormat::Csv ? "csv" : "json"},
  };
}

Experiment experiment_from_json(const json& m) {
  Experiment e;
  const std::uint64_t seed = m.at("seed").get<std::uint64_t>();
  const auto& s = m.at("synth");
  e.synth.dim = s.at("dim").get<std::size_t>();
  e.synth.num_classes = s.at("num_classes").get<std::size_t>();
  e.synth.points_per_class = s.at("points_per_class").get<std::size_t>();
  e.synth.kappa_class = read_number_or_inf(s.at("kappa_class"));
  e.synth.seed = seed;

  const auto& l = m.at("loss");
  const auto variant = clab::parse_variant(l.at("variant").get<std::string>());
  if (!variant) throw clab::Error(clab::ErrorCode::InvalidConfig, "manifest names an unknown variant");
  auto& t = e.train;
  t.loss.variant = *variant;
  t.loss.tau = l.at("tau").get<double>();
  t.loss.alpha = l.at("alpha").get<double>();
  if (!l.at("lambda").is_null()) t.loss.lambda = l.at("lambda").get<double>();

  const auto& r = m.at("train");
  t.steps = r.at("steps").get<std::size_t>();
  t.batch_size = r.at("batch_size").get<std::size_t>();
  t.learning_rate = r.at("learning_rate").get<double>();
  t.lr_schedule.clear();
  for (const auto& item : r.at("lr_schedule")) t.lr_schedule.emplace_back(item.at(0).get<std::size_t>(), item.at(1).get<double>());
  if (r.at("memory_bank_momentum").is_null()) t.memory_bank_momentum.reset();
  else t.memory_bank_momentum = r.at("memory_bank_momentum").get<double>();
  t.positive_source = parse_positive_source(r.at("positive_source").get<std::string>());
  t.kappa_aug = read_number_or_inf(r.at("kappa_aug"));
  t.metric_every = r.at("metric_every").get<std::size_t>();
  t.knn_k = r.at("knn_k").get<std::size_t>();
  t.uniformity_t = r.at("uniformity_t").get<double>();
  t.tolerance_form = parse_tolerance_form(r.at("tolerance_form").get<std::string>());
  t.seed = seed;
  e.synth.kappa_aug = t.kappa_aug;
  e.format = parse_format(m.at("format").get<std::string>());
  return e;
}

json load_manifest(const std::string& path, std::string_view command) {
  json m;
  try {
    m = json::parse(clab::read_file(path));
  } catch (const json::exception& e) {
    throw clab::Error(clab::ErrorCode::InvalidConfig, "manifest " + path + " is not valid JSON: " + e.what());
  }
  if (m.value("command", "") != command) {
    throw clab::Error(clab::ErrorCode::InvalidConfig,
                      "manifest " + path + " was written by '" + m.value("command", "?") + "', not '" +
                          std::string(command) + "'");
  }
  return m;
}

void reject_with_manifest(const Common& c) {
  if (c.manifest.empty()) return;
  for (const auto* o : c.config_options) {
    if (o->count() > 0) throw UsageError{o->get_name(), o->get_name() + " cannot be combined with --manifest"};
  }
}

/// Output directory: --out wins, otherwise the manifest's own directory.
fs::path resolve_out(const Common& c, const json* manifest) {
  if (!c.out.empty()) return c.out;
  if (manifest && manifest->contains("out")) return manifest->at("out").get<std::string>();
  throw UsageError{"--out", "--out is required"};
}

void write_manifest(const fs::path& out, json manifest) {
  fs::create_directories(out);
  clab::write_file((out / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::string report_name(const std::string& stem, clab::ReportFormat f) {
  return stem + (f == clab::ReportFormat::Csv ? ".csv" : ".json");
}

std::uint64_t manifest_or_flag_seed(const Common& c, const json* manifest) {
  return manifest ? manifest->at("seed").get<std::uint64_t>() : c.seed;
}

int run_train(const ExperimentFlags& flags, const Common& c) {
  reject_with_manifest(c);
  std::optional<json> loaded;
  if (!c.manifest.empty()) loaded = load_manifest(c.manifest, "train");
  const Experiment e = loaded ? experiment_from_json(*loaded) : experiment_from_flags(flags, c);
  const fs::path out = resolve_out(c, loaded ? &*loaded : nullptr);

  const std::string trajectory = report_name("trajectory", e.format);
  json outputs = {{"trajectory", trajectory}, {"final", "final.clab"}};
  if (e.train.memory_bank_momentum) outputs["bank"] = "bank.clab";
  json manifest = {{"artifact", kArtifactVersion}, {"command", "train"}, {"seed", e.train.seed},
                   {"out", out.string()}};
  manifest.update(experiment_json(e));
  manifest["outputs"] = outputs;
  write_manifest(out, manifest);

  const clab::Dataset data = clab::make_dataset(e.synth);
  const clab::TrainResult result = clab::train(data, e.train);
  clab::write_report(clab::report_rows(result.trajectory, e.train.loss), (out / trajectory).string(), e.format);
  clab::write_dump((out / "final.clab").string(), {result.embeddings, data.labels});
  if (result.bank) clab::write_dump((out / "bank.clab").string(), {*result.bank, data.labels});

  const auto& last = result.trajectory.snapshots.back();
  std::cout << "train " << clab::to_string(e.train.loss.variant) << " tau=" << clab::format_double(e.train.loss.tau)
            << " step=" << last.step << " loss=" << clab::format_double(last.mean_loss)
            << " knn_purity=" << clab::format_double(last.knn_purity) << "\n"
            << "wrote " << (out / trajectory).string() << "\n";
  return 0;
}

int run_sweep(const ExperimentFlags& flags, const Common& c, std::vector<double> taus, std::size_t jobs,
              const CLI::Option* taus_opt) {
  reject_with_manifest(c);
  std::optional<json> loaded;
  if (!c.manifest.empty()) loaded = load_manifest(c.manifest, "sweep");
  Experiment e;
  if (loaded) {
    e = experiment_from_json(*loaded);
    taus = loaded->at("taus").get<std::vector<double>>();
  } else {
    e = experiment_from_flags(flags, c);
    if (taus_opt->count() == 0) taus = kDefaultTaus;
    if (taus.empty()) throw UsageError{"--taus", "--taus needs at least one value"};
    for (double tau : taus) {
      if (!(tau > 0.0) || !std::isfinite(tau)) throw UsageError{"--taus", "every tau must be a positive finite number"};
    }
  }
  const fs::path out = resolve_out(c, loaded ? &*loaded : nullptr);
  const std::string report = report_name("sweep", e.format);

  json manifest = {{"artifact", kArtifactVersion}, {"command", "sweep"}, {"seed", e.train.seed},
                   {"out", out.string()}};
  manifest.update(experiment_json(e));
  manifest["taus"] = taus;
  manifest["outputs"] = {{"report", report}};
  write_manifest(out, manifest);

  const clab::Dataset data = clab::make_dataset(e.synth);
  const auto result = clab::sweep_tau(data, e.train, taus, jobs);
  clab::write_report(clab::report_rows(result), (out / report).string(), e.format);
  std::cout << "sweep " << clab::to_string(e.train.loss.variant) << " points=" << taus.size() << "\n"
            << "wrote " << (out / report).string() << "\n";
  return 0;
}

struct MetricsFlags {
  std::string input;
  std::string keys;
  double kappa_aug = clab::TrainConfig{}.kappa_aug;
  std::size_t knn_k = clab::TrainConfig{}.knn_k;
  double uniformity_t = 2.0;
  std::optional<std::size_t> pair_budget;
  bool tolerance = false;
  bool purity = false;
};

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int run_metrics(const MetricsFlags& flags, const Common& c) {
  reject_with_manifest(c);
  std::optional<json> loaded;
  MetricsFlags f = flags;
  clab::EvalSettings eval;
  if (!c.manifest.empty()) {
    loaded = load_manifest(c.manifest, "metrics");
    const auto& m = *loaded;
    f.input = m.at("input").get<std::string>();
    f.keys = m.at("keys").is_null() ? "" : m.at("keys").get<std::string>();
    f.kappa_aug = read_number_or_inf(m.at("kappa_aug"));
    f.knn_k = m.at("knn_k").get<std::size_t>();
    f.uniformity_t = m.at("uniformity_t").get<double>();
    if (m.at("pair_budget").is_null()) f.pair_budget.reset();
    else f.pair_budget = m.at("pair_budget").get<std::size_t>();
    f.tolerance = m.at("require_tolerance").get<bool>();
    f.purity = m.at("require_purity").get<bool>();
  }
  if (f.input.empty()) throw UsageError{"--input", "--input is required"};
  eval.kappa_aug = f.kappa_aug;
  eval.seed = manifest_or_flag_seed(c, loaded ? &*loaded : nullptr);
  eval.knn_k = f.knn_k;
  eval.uniformity_t = f.uniformity_t;
  eval.pair_budget = f.pair_budget;
  const fs::path out = resolve_out(c, loaded ? &*loaded : nullptr);

  json manifest = {{"artifact", kArtifactVersion},
                   {"command", "metrics"},
                   {"seed", eval.seed},
                   {"out", out.string()},
                   {"input", f.input},
                   {"keys", f.keys.empty() ? json(nullptr) : json(f.keys)},
                   {"kappa_aug", number_or_inf(f.kappa_aug)},
                   {"knn_k", f.knn_k},
                   {"uniformity_t", f.uniformity_t},
                   {"pair_budget", f.pair_budget ? json(*f.pair_budget) : json(nullptr)},
                   {"require_tolerance", f.tolerance},
                   {"require_purity", f.purity},
                   {"outputs", {{"metrics", "metrics.json"}}}};
  write_manifest(out, manifest);

  const auto input = clab::read_dump(f.input);
  if (!input.off_unit_rows.empty()) {
    std::cerr << "warning: " << input.off_unit_rows.size() << " rows of " << f.input
              << " deviate from unit norm by more than 1e-6 (first: row " << input.off_unit_rows.front() << ")\n";
  }
  const auto& labels = input.dump.labels;
  if ((f.tolerance || f.purity) && !labels) {
    throw clab::Error(clab::ErrorCode::MissingLabels,
                      f.input + " has no labels; --tolerance and --purity need a labelled dump");
  }
  std::optional<clab::Matrix> keys;
  if (!f.keys.empty()) {
    keys = clab::read_dump(f.keys).dump.rows;
    if (!keys->same_shape(input.dump.rows)) {
      throw clab::Error(clab::ErrorCode::ShapeMismatch, "--keys dump does not match the shape of --input");
    }
  }
  const std::size_t n = input.dump.rows.rows();
  if (labels && (f.knn_k == 0 || f.knn_k >= n)) {
    throw clab::Error(clab::ErrorCode::KTooLarge, "knn k must lie in [1, N-1]");
  }
  const auto m = clab::embedding_metrics(input.dump.rows, labels ? &*labels : nullptr, keys ? &*keys : nullptr, eval);

  json result = {{"n", n},
                 {"dim", input.dump.rows.cols()},
                 {"uniformity", m.uniformity},
                 {"neg_uniformity", -m.uniformity},
                 {"tolerance", optional_number(m.tolerance)},
                 {"tolerance_masked_mean_all_pairs", optional_number(m.tolerance_all_pairs)},
                 {"knn_purity", optional_number(m.knn_purity)},
                 {"mean_pos_sim", m.local.mean_positive},
                 {"top_neg_sim", m.local.mean_top_negatives},
                 {"off_unit_rows", input.off_unit_rows.size()}};
  clab::write_file((out / "metrics.json").string(), result.dump(2) + "\n");
  std::cout << "uniformity=" << clab::format_double(m.uniformity);
  if (m.tolerance) std::cout << " tolerance=" << clab::format_double(*m.tolerance);
  if (m.knn_purity) std::cout << " knn_purity=" << clab::format_double(*m.knn_purity);
  std::cout << "\nwrote " << (out / "metrics.json").string() << "\n";
  return 0;
}

int run_limits(clab::LimitCheckOptions options, const Common& c) {
  reject_with_manifest(c);
  std::optional<json> loaded;
  if (!c.manifest.empty()) {
    loaded = load_manifest(c.manifest, "limits-check");
    options.seed = loaded->at("seed").get<std::uint64_t>();
    options.tau_small = loaded->at("tau_small").get<double>();
    options.tau_large = loaded->at("tau_large").get<double>();
    options.perturb_gradients = loaded->at("perturb_gradients").get<double>();
  } else {
    options.seed = c.seed;
  }
  std::optional<fs::path> out;
  if (!c.out.empty()) out = c.out;
  else if (loaded && loaded->contains("out")) out = loaded->at("out").get<std::string>();
  if (out) {
    write_manifest(*out, {{"artifact", kArtifactVersion},
                          {"command", "limits-check"},
                          {"seed", options.seed},
                          {"out", out->string()},
                          {"tau_small", options.tau_small},
                          {"tau_large", options.tau_large},
                          {"perturb_gradients", options.perturb_gradients},
                          {"outputs", {{"report", "limits.json"}}}});
  }

  const auto results = clab::run_limit_checks(options);
  json report = json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  measured=" << clab::format_double(r.measured)
              << " required " << r.relation << " " << clab::format_double(r.tolerance) << "\n";
    report.push_back({{"check", r.name},
                      {"measured", r.measured},
                      {"relation", r.relation},
                      {"tolerance", r.tolerance},
                      {"passed", r.passed}});
  }
  if (out) clab::write_file((*out / "limits.json").string(), report.dump(2) + "\n");
  if (!all) {
    std::cerr << "failed checks:";
    for (const auto& r : results)
      if (!r.passed) std::cerr << " " << r.name;
    std::cerr << "\n";
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temperature experiments for contrastive losses on the unit hypersphere"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kArtifactVersion);

  std::uint64_t seed = 0;
  try {
    seed = default_seed();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.message << "\n";
    return 2;
  }

  ExperimentFlags train_flags;
  Common train_common;
  train_common.seed = seed;
  auto* train = app.add_subcommand("train", "train one embedding table and record its trajectory");
  add_experiment_flags(*train, train_flags, train_common, true);
  add_common_flags(*train, train_common, true);

  ExperimentFlags sweep_flags;
  Common sweep_common;
  sweep_common.seed = seed;
  std::vector<double> taus;
  std::size_t jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "train once per temperature and report the final snapshots");
  add_experiment_flags(*sweep, sweep_flags, sweep_common, false);
  add_common_flags(*sweep, sweep_common, true);
  auto* taus_opt = sweep->add_option("--taus", taus, "comma separated temperatures (default 0.05 ... 1.0)")
                       ->delimiter(',')
                       ->expected(1, -1);
  sweep_common.config_options.push_back(taus_opt);
  sweep->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  MetricsFlags metrics_flags;
  Common metrics_common;
  metrics_common.seed = seed;
  auto* metrics = app.add_subcommand("metrics", "evaluate an embedding dump");
  {
    auto& c = metrics_common.config_options;
    auto& f = metrics_flags;
    c.push_back(metrics->add_option("--input", f.input, "embedding dump"));
    c.push_back(metrics->add_option("--keys", f.keys, "key dump for local separation (default: a second view)"));
    c.push_back(metrics->add_option("--kappa-aug", f.kappa_aug, "view concentration")->check(kappa_value())
                    ->capture_default_str());
    c.push_back(metrics->add_option("--knn-k", f.knn_k, "neighbours for knn purity")->check(CLI::PositiveNumber)
                    ->capture_default_str());
    c.push_back(metrics->add_option("--uniformity-t", f.uniformity_t, "uniformity kernel scale")
                    ->check(positive_finite())
                    ->capture_default_str());
    c.push_back(metrics->add_option("--pair-budget", f.pair_budget, "Monte Carlo pairs for uniformity")
                    ->check(CLI::PositiveNumber));
    c.push_back(metrics->add_flag("--tolerance", f.tolerance, "require tolerance (needs labels)"));
    c.push_back(metrics->add_flag("--purity", f.purity, "require knn purity (needs labels)"));
  }
  add_common_flags(*metrics, metrics_common, false);

  clab::LimitCheckOptions limit_options;
  Common limits_common;
  limits_common.seed = seed;
  auto* limits = app.add_subcommand("limits-check", "finite-difference and temperature-limit self checks");
  limits_common.config_options.push_back(
      limits->add_option("--tau-small", limit_options.tau_small, "temperature for the small-tau limit")
          ->check(positive_finite())
          ->capture_default_str());
  limits_common.config_options.push_back(
      limits->add_option("--tau-large", limit_options.tau_large, "temperature for the large-tau limit")
          ->check(positive_finite())
          ->capture_default_str());
  limits_common.config_options.push_back(
      limits->add_option("--perturb-gradients", limit_options.perturb_gradients,
                         "test only: offset added to analytic gradients")
          ->check(finite_non_negative()));
  add_common_flags(*limits, limits_common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train) return run_train(train_flags, train_common);
    if (*sweep) return run_sweep(sweep_flags, sweep_common, taus, jobs, taus_opt);
    if (*metrics) return run_metrics(metrics_flags, metrics_common);
    if (*limits) return run_limits(limit_options, limits_common);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.flag << ": " << e.message << "\n";
    return 2;
  } catch (const clab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
