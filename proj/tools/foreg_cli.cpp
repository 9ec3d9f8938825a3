// foreg: command-line driver for dataset generation, contamination, fitting,
// prediction, cross-validation sweeps and benchmarks.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "foreg/datagen.hpp"
#include "foreg/error.hpp"
#include "foreg/evaluation.hpp"
#include "foreg/json_io.hpp"
#include "foreg/model.hpp"
#include "foreg/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace foreg;

namespace {

constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// logging (stderr only, so stdout and artifacts stay deterministic)

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FOREG_LOG");
    const std::string v = env ? env : "";
    if (v == "error") return LogLevel::Error;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "foreg [" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// config helpers

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

json section(const json& cfg, const char* key) { return cfg.contains(key) ? cfg.at(key) : json::object(); }

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json load_config(const std::string& path) {
  if (path.empty()) return json{{"schema_version", kSchemaVersion}};
  json cfg;
  try {
    cfg = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ValidationError("config: top level must be an object");
  if (!cfg.contains("schema_version")) throw ValidationError("config: missing schema_version");
  if (cfg.at("schema_version") != kSchemaVersion)
    throw ValidationError("config: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  return cfg;
}

std::vector<double> value_grid(const json& j, const char* where) {
  if (j.is_array()) return j.get<std::vector<double>>();
  if (j.is_number()) return {j.get<double>()};
  reject_unknown_keys(j, {"start", "stop", "count"}, where);
  return GeometricGrid{j.at("start").get<double>(), j.at("stop").get<double>(), j.at("count").get<Index>()}.values();
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }
std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// shared parsing

struct Synthetic {
  SynthConfig config;
  double noise_sigma = 0.0;
};

Synthetic parse_synthetic(const json& j, std::uint64_t seed) {
  reject_unknown_keys(j, {"n", "sigma_in", "sigma_out", "m_in", "m_out", "atom_seed", "noise_sigma"}, "synthetic");
  Synthetic s;
  s.config.n = get_or<Index>(j, "n", s.config.n);
  if (j.contains("sigma_in")) s.config.sigma_in = to_vector(j.at("sigma_in").get<std::vector<double>>());
  if (j.contains("sigma_out")) s.config.sigma_out = to_vector(j.at("sigma_out").get<std::vector<double>>());
  const Index m_in = get_or<Index>(j, "m_in", 100), m_out = get_or<Index>(j, "m_out", 100);
  if (m_in < 1 || m_out < 1) throw ValidationError("synthetic: m_in and m_out must be >= 1");
  s.config.grid_in = make_grid(Grid::linspace(0.0, 1.0, m_in));
  s.config.grid_out = make_grid(Grid::linspace(0.0, 1.0, m_out));
  s.config.seed = seed;
  if (j.contains("atom_seed")) s.config.atom_seed = j.at("atom_seed").get<std::uint64_t>();
  s.noise_sigma = get_or(j, "noise_sigma", 0.0);
  if (!(s.noise_sigma >= 0.0)) throw ValidationError("synthetic: noise_sigma must be >= 0");
  s.config.validate();
  return s;
}

json synthetic_to_json(const Synthetic& s) {
  return {{"n", s.config.n},
          {"r", s.config.atoms()},
          {"sigma_in", to_std(s.config.sigma_in)},
          {"sigma_out", to_std(s.config.sigma_out)},
          {"m_in", s.config.grid_in->size()},
          {"m_out", s.config.grid_out->size()},
          {"atom_seed", s.config.atom_seed.value_or(s.config.seed)},
          {"noise_sigma", s.noise_sigma}};
}

OutlierSpec parse_outliers(const json& j, std::uint64_t seed) {
  reject_unknown_keys(j, {"type", "tau", "zeta", "mode", "sigma", "xi"}, "outliers");
  OutlierSpec spec;
  spec.seed = seed;
  spec.tau = get_or(j, "tau", spec.tau);
  const int type = get_or(j, "type", 1);
  const auto only = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (j.contains(k)) throw ValidationError(std::string("outliers: '") + k + "' does not apply to type " + std::to_string(type));
  };
  if (type == 1) {
    only({"zeta", "mode", "sigma", "xi"});
    spec.kind = Type1Outliers{};
  } else if (type == 2) {
    only({"xi"});
    Type2Outliers t;
    t.zeta = get_or(j, "zeta", t.zeta);
    if (j.contains("sigma")) t.sigma = to_vector(j.at("sigma").get<std::vector<double>>());
    const std::string mode = get_or<std::string>(j, "mode", "add");
    if (mode == "add") t.mode = Type2Mode::Add;
    else if (mode == "replace") t.mode = Type2Mode::Replace;
    else throw ValidationError("outliers: mode must be 'add' or 'replace'");
    spec.kind = t;
  } else if (type == 3) {
    only({"zeta", "mode", "sigma"});
    spec.kind = Type3Outliers{get_or(j, "xi", 0.1)};
  } else {
    throw ValidationError("outliers: type must be 1, 2 or 3");
  }
  spec.validate();
  return spec;
}

json outliers_to_json(const OutlierSpec& spec) {
  json j{{"tau", spec.tau}, {"seed", spec.seed}};
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Type1Outliers>) {
          j["type"] = 1;
        } else if constexpr (std::is_same_v<T, Type2Outliers>) {
          j["type"] = 2;
          j["zeta"] = k.zeta;
          j["sigma"] = to_std(k.sigma);
          j["mode"] = k.mode == Type2Mode::Add ? "add" : "replace";
        } else {
          j["type"] = 3;
          j["xi"] = k.xi;
        }
      },
      spec.kind);
  return j;
}

// Mirror-padded, standardized, flattened MFCC sequences (one CSV per sample,
// frames x coefficients, files taken in name order).
Matrix load_mfcc_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  if (files.empty()) throw ValidationError("mfcc: no .csv sequences in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<Matrix> seqs;
  Index longest = 0;
  for (const auto& f : files) {
    CsvTable t = read_csv_table(f);
    if (t.grid) throw ValidationError("mfcc: sequence files carry no theta header: " + f.string());
    if (!t.values.allFinite()) throw ValidationError("mfcc: missing cells in " + f.string());
    longest = std::max(longest, t.values.rows());
    seqs.push_back(std::move(t.values));
  }
  for (auto& s : seqs) s = mirror_pad(s, longest);
  StandardizedMfcc st = standardize_mfcc(seqs);
  for (Index c : st.stats.clamped)
    log(LogLevel::Warn, "mfcc: coefficient " + std::to_string(c) + " has zero variance; std clamped to 1");
  return flatten_sequences(st.sequences);
}

FunctionalDataset load_data(const json& cfg) {
  if (!cfg.contains("data")) throw ValidationError("no data source: set 'data' in the config or pass --data");
  const json& j = cfg.at("data");
  reject_unknown_keys(j, {"bundle", "inputs", "outputs", "input_grid", "output_grid", "mfcc_dir"}, "data");
  if (j.contains("bundle")) {
    if (j.size() != 1) throw ValidationError("data: 'bundle' excludes the other keys");
    return read_bundle(j.at("bundle").get<std::string>());
  }
  const auto path_opt = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key)) return std::nullopt;
    return fs::path(j.at(key).get<std::string>());
  };
  if (!j.contains("outputs")) throw ValidationError("data: 'outputs' is required");
  FunctionalDataset d;
  std::tie(d.outputs, d.output_grid) = ingest_csv_matrix(j.at("outputs").get<std::string>(), path_opt("output_grid"));
  if (j.contains("mfcc_dir")) {
    if (j.contains("inputs") || j.contains("input_grid")) throw ValidationError("data: 'mfcc_dir' replaces 'inputs'");
    d.inputs = load_mfcc_dir(j.at("mfcc_dir").get<std::string>());
    d.input_grid = make_grid(Grid::linspace(0.0, 1.0, d.inputs.cols()));
  } else {
    if (!j.contains("inputs")) throw ValidationError("data: 'inputs' or 'mfcc_dir' is required");
    std::tie(d.inputs, d.input_grid) = ingest_csv_matrix(j.at("inputs").get<std::string>(), path_opt("input_grid"));
  }
  if (d.inputs.rows() != d.outputs.rows()) throw ValidationError("data: inputs and outputs have different sample counts");
  return d;
}

struct Kernels {
  ScalarKernel kx = ScalarKernel::gaussian(0.01);
  ScalarKernel ktheta = ScalarKernel::gaussian(100.0);
};

Kernels parse_kernels(const json& cfg) {
  Kernels k;
  if (!cfg.contains("kernels")) return k;
  const json& j = cfg.at("kernels");
  reject_unknown_keys(j, {"input", "output"}, "kernels");
  if (j.contains("input")) k.kx = kernel_from_json(j.at("input"));
  if (j.contains("output")) k.ktheta = kernel_from_json(j.at("output"));
  return k;
}

RepresentationChoice parse_representation(const json& cfg) {
  const std::string rep = get_or<std::string>(cfg, "representation", "spline");
  if (rep == "spline") {
    if (cfg.contains("rank")) throw ValidationError("rank only applies to the eigen representation");
    return SplineChoice{};
  }
  if (rep != "eigen") throw ValidationError("representation must be 'spline' or 'eigen'");
  EigenChoice e;
  if (cfg.contains("rank")) e.rank = cfg.at("rank").get<Index>();
  return e;
}

FitOptions parse_fit_options(const json& cfg) {
  FitOptions o;
  const Kernels k = parse_kernels(cfg);
  o.kx = k.kx;
  o.ktheta = k.ktheta;
  o.lambda = get_or(cfg, "lambda", o.lambda);
  if (cfg.contains("loss")) o.loss = loss_from_json(cfg.at("loss"));
  o.representation = parse_representation(cfg);
  if (cfg.contains("solver")) o.solver = solver_from_json(cfg.at("solver"));
  return o;
}

json representation_to_json(const ForModel& m) {
  json j{{"kind", m.representation() == Representation::Eigen ? "eigen" : "spline"}};
  if (m.basis()) j["rank"] = m.basis()->rank();
  return j;
}

// ---------------------------------------------------------------------------
// commands

struct Run {
  json cfg;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  fs::path out;
};

int cmd_generate(const Run& run) {
  const Synthetic s = parse_synthetic(section(run.cfg, "synthetic"), run.seed);
  SyntheticDataset d = generate_synthetic(s.config);
  json meta{{"schema_version", kSchemaVersion},
            {"command", "generate"},
            {"seed", run.seed},
            {"synthetic", synthetic_to_json(s)}};
  if (s.noise_sigma > 0.0) {
    write_csv(run.out / "outputs_clean.csv", d.data.outputs, &d.data.output_grid->locations());
    d.data.outputs = add_gaussian_noise(d.data.outputs, s.noise_sigma, run.seed);
  }
  write_bundle(run.out, d.data, dump(meta));
  log(LogLevel::Info, "generate: wrote " + std::to_string(d.data.size()) + " pairs to " + run.out.string());
  return 0;
}

int cmd_corrupt(const Run& run) {
  const FunctionalDataset data = load_data(run.cfg);
  const OutlierSpec spec = parse_outliers(section(run.cfg, "outliers"), run.seed);
  const Contaminated c = contaminate(data, spec);
  json meta{{"schema_version", kSchemaVersion},
            {"command", "corrupt"},
            {"n", data.size()},
            {"outliers", outliers_to_json(spec)},
            {"corrupted", c.indices.size()}};
  write_bundle(run.out, c.data, dump(meta));
  write_csv(run.out / "contaminated.csv", c.data.outputs, &c.data.output_grid->locations());
  write_file(run.out / "indices.json", json(c.indices).dump() + "\n");
  log(LogLevel::Info, "corrupt: " + std::to_string(c.indices.size()) + " of " + std::to_string(data.size()) + " outputs");
  return 0;
}

int cmd_fit(const Run& run) {
  const FunctionalDataset data = load_data(run.cfg);
  const FitOptions o = parse_fit_options(run.cfg);
  const ForModel model = fit(data.inputs, data.outputs, data.output_grid, o);
  save_model(model, run.out / "model.forarc");
  json report{{"schema_version", kSchemaVersion},
              {"command", "fit"},
              {"n_train", model.n_train()},
              {"lambda", model.lambda()},
              {"loss", loss_to_json(model.loss())},
              {"kernels", {{"input", kernel_to_json(model.kx())}, {"output", kernel_to_json(model.ktheta())}}},
              {"representation", representation_to_json(model)},
              {"sparsity", dual_sparsity(model)},
              {"train_mse", mse(data.outputs, predict(model, data.inputs))},
              {"solver", report_to_json(model.report())}};
  write_file(run.out / "fit_report.json", dump(report));
  if (!model.report().converged) log(LogLevel::Warn, "fit: solver stopped at max_iters without converging");
  std::cout << "sparsity " << report["sparsity"].dump() << "\ntrain_mse " << report["train_mse"].dump() << "\n";
  return 0;
}

int cmd_predict(const Run& run) {
  const json p = section(run.cfg, "predict");
  reject_unknown_keys(p, {"model", "inputs", "locations"}, "predict");
  if (!p.contains("model")) throw ValidationError("predict: no model (set predict.model or pass --model)");
  const ForModel model = load_model(p.at("model").get<std::string>());

  Matrix inputs;
  std::optional<Matrix> truth;
  if (p.contains("inputs")) {
    if (run.cfg.contains("data")) throw ValidationError("predict: give either predict.inputs or data, not both");
    CsvTable t = read_csv_table(p.at("inputs").get<std::string>());
    if (t.grid) t.values = fill_missing(t.values, *t.grid);
    else if (!t.values.allFinite()) throw ValidationError("predict: missing cells need a theta header to be filled");
    inputs = std::move(t.values);
  } else {
    FunctionalDataset d = load_data(run.cfg);
    inputs = std::move(d.inputs);
    if (*d.output_grid == *model.grid()) truth = std::move(d.outputs);
  }

  Vector locations = model.grid()->locations();
  if (p.contains("locations")) {
    const json& l = p.at("locations");
    locations = to_vector(l.is_array() ? l.get<std::vector<double>>() : value_grid(l, "predict.locations"));
    truth.reset();
  }
  const Matrix pred = predict(model, inputs, locations);
  write_csv(run.out / "predictions.csv", pred, &locations);
  json report{{"schema_version", kSchemaVersion}, {"command", "predict"}, {"n", pred.rows()}};
  if (truth) {
    report["mse"] = mse(*truth, pred);
    std::cout << "mse " << report["mse"].dump() << "\n";
  }
  write_file(run.out / "predict_report.json", dump(report));
  return 0;
}

struct CvSetup {
  CvPlan plan;
  ModelTemplate tmpl;
};

CvSetup parse_cv(const Run& run) {
  const json j = section(run.cfg, "cv");
  reject_unknown_keys(j, {"folds", "lambdas", "params", "aggregate", "family", "p", "metric"}, "cv");
  CvSetup s;
  s.plan.folds = get_or<Index>(j, "folds", 5);
  s.plan.lambdas = j.contains("lambdas") ? value_grid(j.at("lambdas"), "cv.lambdas") : GeometricGrid{1e-6, 1e-3, 10}.values();
  const std::string agg = get_or<std::string>(j, "aggregate", "median");
  if (agg == "mean") s.plan.aggregate = Aggregate::Mean;
  else if (agg == "median") s.plan.aggregate = Aggregate::Median;
  else throw ValidationError("cv: aggregate must be 'mean' or 'median'");
  s.plan.seed = run.seed;
  s.plan.jobs = run.jobs;

  s.tmpl.options = parse_fit_options(run.cfg);
  const std::string family = get_or<std::string>(j, "family", "square");
  if (family == "square") s.tmpl.family = LossFamily::Square;
  else if (family == "huber") s.tmpl.family = LossFamily::Huber;
  else if (family == "eps") s.tmpl.family = LossFamily::EpsInsensitive;
  else throw ValidationError("cv: family must be 'square', 'huber' or 'eps'");
  if (j.contains("p")) {
    const json& pj = j.at("p");
    s.tmpl.p = pj.is_string() && pj.get<std::string>() == "inf" ? PNorm::infinity() : PNorm(pj.get<double>());
  }
  if (s.tmpl.family == LossFamily::Square) {
    if (j.contains("params")) throw ValidationError("cv: the square loss has no parameter grid");
    s.plan.params = {0.0};
  } else {
    if (!j.contains("params")) throw ValidationError("cv: 'params' (kappa or epsilon grid) is required");
    s.plan.params = value_grid(j.at("params"), "cv.params");
  }
  const std::string metric = get_or<std::string>(j, "metric", "mse");
  if (metric == "mse") s.tmpl.metric = Metric::Mse;
  else if (metric == "nmse") s.tmpl.metric = Metric::Nmse;
  else throw ValidationError("cv: metric must be 'mse' or 'nmse'");
  s.plan.validate();
  return s;
}

int cmd_cv(const Run& run) {
  const FunctionalDataset data = load_data(run.cfg);
  const CvSetup s = parse_cv(run);
  const CvResult r = cross_validate(data, s.plan, s.tmpl);
  write_file(run.out / "cv_folds.csv", format_fold_table(r));
  write_file(run.out / "cv_scores.csv", format_aggregate_table(r));
  std::size_t failed = 0;
  for (const auto& c : r.table) failed += std::isinf(c.score) ? 1 : 0;
  if (failed == r.table.size()) throw NumericalError("cv: every grid cell failed");
  if (failed) log(LogLevel::Warn, "cv: " + std::to_string(failed) + " grid cells failed and scored +inf");
  const json best{{"schema_version", kSchemaVersion},
                  {"command", "cv"},
                  {"lambda", r.best_lambda()},
                  {"loss_param", r.best_param()},
                  {"score", r.table[r.best].score},
                  {"aggregate", to_string(s.plan.aggregate)},
                  {"failed_cells", failed}};
  write_file(run.out / "cv_best.json", dump(best));
  std::cout << "best lambda " << best["lambda"].dump() << " loss_param " << best["loss_param"].dump() << " score "
            << best["score"].dump() << "\n";
  return 0;
}

struct BenchEntry {
  std::string name;
  LossSpec loss;
  double lambda;
};

std::vector<BenchEntry> default_suite() {
  const double lambda = 1e-4;
  return {{"square", square_loss(), lambda},
          {"huber_p2", huber_loss(0.3, 2), lambda},
          {"huber_p1", huber_loss(0.3, 1), lambda},
          {"eps_p2", eps_insensitive_loss(0.01, PNorm(2.0)), lambda},
          {"eps_pinf", eps_insensitive_loss(0.1, PNorm::infinity()), lambda}};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

int cmd_benchmark(const Run& run) {
  const json b = section(run.cfg, "benchmark");
  reject_unknown_keys(b, {"repeats", "n_train", "n_test", "losses"}, "benchmark");
  const Index repeats = get_or<Index>(b, "repeats", 5);
  const Index n_train = get_or<Index>(b, "n_train", 100), n_test = get_or<Index>(b, "n_test", 100);
  if (repeats < 1 || n_train < 1 || n_test < 1) throw ValidationError("benchmark: repeats, n_train, n_test must be >= 1");

  std::vector<BenchEntry> suite;
  if (b.contains("losses")) {
    for (const json& e : b.at("losses")) {
      reject_unknown_keys(e, {"name", "loss", "lambda"}, "benchmark.losses[]");
      const LossSpec loss = loss_from_json(e.at("loss"));
      suite.push_back({get_or<std::string>(e, "name", loss_label(loss)), loss, e.at("lambda").get<double>()});
    }
    if (suite.empty()) throw ValidationError("benchmark: empty loss list");
  } else {
    suite = default_suite();
  }

  json synth_cfg = section(run.cfg, "synthetic");
  synth_cfg["n"] = n_train + n_test;
  const Synthetic base = parse_synthetic(synth_cfg, run.seed);
  const std::optional<OutlierSpec> outliers =
      run.cfg.contains("outliers") ? std::optional(parse_outliers(run.cfg.at("outliers"), run.seed)) : std::nullopt;
  FitOptions opts = parse_fit_options(run.cfg);

  // one train/test draw per repeat: fresh mixing coefficients over fixed atoms
  std::vector<FunctionalDataset> train(repeats), test(repeats);
  for (Index r = 0; r < repeats; ++r) {
    SynthConfig c = base.config;
    c.seed = run.seed + static_cast<std::uint64_t>(r);
    c.atom_seed = base.config.atom_seed.value_or(run.seed);
    FunctionalDataset d = generate_synthetic(c).data;
    if (base.noise_sigma > 0.0) d.outputs = add_gaussian_noise(d.outputs, base.noise_sigma, c.seed);
    std::vector<Index> tr(n_train), te(n_test);
    for (Index i = 0; i < n_train; ++i) tr[i] = i;
    for (Index i = 0; i < n_test; ++i) te[i] = n_train + i;
    train[r] = d.subset(tr);
    test[r] = d.subset(te);
    if (outliers) {
      OutlierSpec o = *outliers;
      o.seed = c.seed;
      train[r] = contaminate(train[r], o).data;
    }
  }

  const std::size_t cells = suite.size() * static_cast<std::size_t>(repeats);
  std::vector<double> cell_mse(cells, std::nan("")), cell_sparsity(cells, std::nan(""));
  std::vector<std::string> cell_error(cells);
  parallel_for(cells, run.jobs, [&](std::size_t idx) {
    const std::size_t l = idx / static_cast<std::size_t>(repeats);
    const Index r = static_cast<Index>(idx % static_cast<std::size_t>(repeats));
    FitOptions o = opts;
    o.loss = suite[l].loss;
    o.lambda = suite[l].lambda;
    try {
      const ForModel m = fit(train[r].inputs, train[r].outputs, train[r].output_grid, o);
      cell_mse[idx] = mse(test[r].outputs, predict(m, test[r].inputs));
      cell_sparsity[idx] = dual_sparsity(m);
    } catch (const std::exception& e) {
      cell_error[idx] = e.what();
    }
  });

  std::string csv = "loss,lambda,spec,mse_mean,mse_std,sparsity_mean,sparsity_std,failures\n";
  std::string table = "| loss | lambda | MSE | sparsity |\n|---|---|---|---|\n";
  std::size_t total_failed = 0;
  for (std::size_t l = 0; l < suite.size(); ++l) {
    std::vector<double> ms, sp;
    std::size_t failed = 0;
    for (Index r = 0; r < repeats; ++r) {
      const std::size_t idx = l * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r);
      if (!cell_error[idx].empty()) {
        ++failed;
        log(LogLevel::Warn, "benchmark: " + suite[l].name + " repeat " + std::to_string(r) + " failed: " + cell_error[idx]);
        continue;
      }
      ms.push_back(cell_mse[idx]);
      sp.push_back(cell_sparsity[idx]);
    }
    total_failed += failed;
    const bool any = !ms.empty();
    const double mm = any ? mean_of(ms) : std::nan(""), msd = any ? std_of(ms) : std::nan("");
    const double sm = any ? mean_of(sp) : std::nan(""), ssd = any ? std_of(sp) : std::nan("");
    csv += suite[l].name + "," + json(suite[l].lambda).dump() + ",\"" + loss_label(suite[l].loss) + "\"," +
           (any ? json(mm).dump() : "nan") + "," + (any ? json(msd).dump() : "nan") + "," +
           (any ? json(sm).dump() : "nan") + "," + (any ? json(ssd).dump() : "nan") + "," + std::to_string(failed) + "\n";
    table += "| " + suite[l].name + " | " + fmt(suite[l].lambda) + " | " +
             (any ? fmt(mm) + " ± " + fmt(msd) : "failed") + " | " +
             (any ? fmt(100.0 * sm) + "% ± " + fmt(100.0 * ssd) + "%" : "failed") + " |\n";
  }
  write_file(run.out / "benchmark.csv", csv);
  write_file(run.out / "benchmark.md", table);
  std::cout << table;
  if (total_failed == cells) throw NumericalError("benchmark: every cell failed");
  return 0;
}

int cmd_robustness_ratio(const Run& run) {
  const json j = section(run.cfg, "robustness");
  reject_unknown_keys(j, {"clean", "corrupted", "p", "levels", "grid"}, "robustness");
  if (!j.contains("clean") || !j.contains("corrupted"))
    throw ValidationError("robustness: 'clean' and 'corrupted' residual CSVs are required");
  std::optional<fs::path> grid;
  if (j.contains("grid")) grid = j.at("grid").get<std::string>();
  const auto clean = ingest_csv(j.at("clean").get<std::string>(), grid);
  const auto corrupted = ingest_csv(j.at("corrupted").get<std::string>(), grid);
  RobustnessRatioSpec spec;
  spec.p = get_or(j, "p", spec.p);
  if (j.contains("levels")) spec.levels = j.at("levels").get<std::vector<double>>();
  const RobustnessRatioResult r = robustness_ratio(clean, corrupted, spec);
  json candidates = json::array();
  for (std::size_t i = 0; i < spec.levels.size(); ++i) {
    candidates.push_back({{"level", spec.levels[i]},
                          {"kappa", r.kappas[i]},
                          {"ratio", std::isnan(r.ratios[i]) ? json(nullptr) : json(r.ratios[i])}});
  }
  const json out{{"schema_version", kSchemaVersion},
                 {"command", "robustness-ratio"},
                 {"p", spec.p},
                 {"ratio", r.ratio},
                 {"kappa", r.kappa},
                 {"candidates", candidates}};
  write_file(run.out / "robustness.json", dump(out));
  std::cout << "ratio " << out["ratio"].dump() << " kappa " << out["kappa"].dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional output regression with robust and sparse losses"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::string> out, representation, data_dir, model_path, inputs_path, clean_path, corrupted_path;
  std::optional<Index> rank;
  std::optional<int> outlier_type;
  std::optional<double> tau;

  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  app.add_option("--out", out, "Output directory");
  app.add_option("--representation", representation, "spline or eigen")->check(CLI::IsMember({"spline", "eigen"}));
  app.add_option("--rank", rank, "Eigen representation rank")->check(CLI::PositiveNumber);
  app.add_option("--data", data_dir, "Dataset bundle directory");

  auto* generate = app.add_subcommand("generate", "Sample a synthetic dataset bundle");
  auto* corrupt = app.add_subcommand("corrupt", "Contaminate the outputs of a bundle");
  corrupt->add_option("--type", outlier_type, "Outlier type 1, 2 or 3");
  corrupt->add_option("--tau", tau, "Fraction of corrupted samples");
  auto* fitc = app.add_subcommand("fit", "Fit a model and write model.forarc");
  auto* predictc = app.add_subcommand("predict", "Predict with a saved model");
  predictc->add_option("--model", model_path, "Model archive");
  predictc->add_option("--inputs", inputs_path, "CSV of inputs, one sample per row");
  auto* cv = app.add_subcommand("cv", "Cross-validated grid search");
  auto* bench = app.add_subcommand("benchmark", "Loss suite over repeated train/test draws");
  auto* rr = app.add_subcommand("robustness-ratio", "Robustness ratio of two residual sets");
  rr->add_option("--clean", clean_path, "CSV of clean residuals");
  rr->add_option("--corrupted", corrupted_path, "CSV of corrupted residuals");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Run run;
    run.cfg = load_config(config_path);
    json& cfg = run.cfg;
    if (seed) cfg["seed"] = *seed;
    if (jobs) cfg["jobs"] = *jobs;
    if (out) cfg["out"] = *out;
    if (representation) {
      cfg["representation"] = *representation;
      if (*representation == "spline") cfg.erase("rank");
    }
    if (rank) cfg["rank"] = *rank;
    if (data_dir) cfg["data"] = json{{"bundle", *data_dir}};
    if (outlier_type) cfg["outliers"]["type"] = *outlier_type;
    if (tau) cfg["outliers"]["tau"] = *tau;
    if (model_path) cfg["predict"]["model"] = *model_path;
    if (inputs_path) cfg["predict"]["inputs"] = *inputs_path;
    if (clean_path) cfg["robustness"]["clean"] = *clean_path;
    if (corrupted_path) cfg["robustness"]["corrupted"] = *corrupted_path;

    reject_unknown_keys(cfg,
                        {"schema_version", "seed", "jobs", "out", "data", "synthetic", "outliers", "kernels", "loss",
                         "lambda", "representation", "rank", "solver", "cv", "benchmark", "predict", "robustness"},
                        "config");
    run.seed = get_or<std::uint64_t>(cfg, "seed", 0);
    run.jobs = get_or<unsigned>(cfg, "jobs", 0);
    run.out = get_or<std::string>(cfg, "out", "out");

    if (!generate->parsed() && !corrupt->parsed()) ensure_dir(run.out);
    if (generate->parsed()) return cmd_generate(run);
    if (corrupt->parsed()) return cmd_corrupt(run);
    if (fitc->parsed()) return cmd_fit(run);
    if (predictc->parsed()) return cmd_predict(run);
    if (cv->parsed()) return cmd_cv(run);
    if (bench->parsed()) return cmd_benchmark(run);
    if (rr->parsed()) return cmd_robustness_ratio(run);
    return 2;
  } catch (const ValidationError& e) {
    log(LogLevel::Error, e.what());
    return 2;
  } catch (const json::exception& e) {
    log(LogLevel::Error, std::string("config: ") + e.what());
    return 2;
  } catch (const NumericalError& e) {
    log(LogLevel::Error, e.what());
    return 3;
  } catch (const IoError& e) {
    log(LogLevel::Error, e.what());
    return 4;
  } catch (const std::exception& e) {
    log(LogLevel::Error, e.what());
    return 1;
  }
}
