#include "foreg/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "foreg/error.hpp"
#include "foreg/parallel.hpp"

namespace foreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  out.append(buf, ptr);
}

}  // namespace

double mse(const Matrix& truth, const Matrix& predictions) {
  if (truth.rows() != predictions.rows() || truth.cols() != predictions.cols())
    throw ValidationError("mse: shape mismatch");
  if (truth.rows() == 0) throw ValidationError("mse: no samples");
  return (truth - predictions).squaredNorm() / static_cast<double>(truth.rows());
}

double nmse(const Matrix& truth, const Matrix& predictions) {
  return mse(truth, predictions) / static_cast<double>(truth.cols());
}

double mse(const std::vector<Vector>& truth, const std::vector<Vector>& predictions) {
  if (truth.size() != predictions.size()) throw ValidationError("mse: sample count mismatch");
  if (truth.empty()) throw ValidationError("mse: no samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != predictions[i].size()) throw ValidationError("mse: location count mismatch");
    acc += (truth[i] - predictions[i]).squaredNorm();
  }
  return acc / static_cast<double>(truth.size());
}

std::vector<double> GeometricGrid::values() const {
  if (count < 1) throw ValidationError("geometric grid: count must be >= 1");
  if (!(start > 0.0) || !(stop > 0.0)) throw ValidationError("geometric grid: bounds must be positive");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = start;
    return out;
  }
  const double a = std::log(start), b = std::log(stop);
  for (Index k = 0; k < count; ++k)
    out[static_cast<std::size_t>(k)] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1));
  out.front() = start;
  out.back() = stop;
  return out;
}

std::string to_string(Aggregate a) { return a == Aggregate::Mean ? "mean" : "median"; }

double aggregate(std::vector<double> scores, Aggregate how) {
  if (scores.empty()) throw ValidationError("aggregate: no scores");
  if (how == Aggregate::Mean) return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  std::sort(scores.begin(), scores.end());
  const std::size_t k = scores.size();
  if (k % 2) return scores[k / 2];
  const double lo = scores[k / 2 - 1], hi = scores[k / 2];
  if (std::isinf(hi)) return hi;
  return 0.5 * (lo + hi);
}

double quantile(std::vector<double> values, double level) {
  if (values.empty()) throw ValidationError("quantile: no values");
  if (!(level >= 0.0 && level <= 1.0)) throw ValidationError("quantile: level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void CvPlan::validate() const {
  if (folds < 2) throw ValidationError("cv: folds must be >= 2");
  if (lambdas.empty() || params.empty()) throw ValidationError("cv: empty hyperparameter grid");
  for (double l : lambdas)
    if (!(l > 0.0)) throw ValidationError("cv: lambda values must be positive");
  for (double p : params)
    if (!(p >= 0.0) || std::isinf(p)) throw ValidationError("cv: loss parameters must be finite and >= 0");
}

std::vector<std::vector<Index>> make_folds(Index n, Index k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("folds: k must be >= 2");
  if (n < k) throw ValidationError("folds: need at least k samples");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 20u};
  std::mt19937_64 rng(seq);
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
  Index start = 0;
  for (Index f = 0; f < k; ++f) {
    const Index size = n / k + (f < n % k ? 1 : 0);
    auto& fold = folds[static_cast<std::size_t>(f)];
    fold.assign(order.begin() + start, order.begin() + start + size);
    std::sort(fold.begin(), fold.end());
    start += size;
  }
  return folds;
}

std::size_t select_best(const std::vector<CvCell>& table) {
  if (table.empty()) throw ValidationError("cv: empty score table");
  std::size_t best = 0;
  for (std::size_t c = 1; c < table.size(); ++c) {
    const CvCell& a = table[c];
    const CvCell& b = table[best];
    if (a.score < b.score) best = c;
    else if (a.score == b.score && (a.lambda > b.lambda || (a.lambda == b.lambda && a.param > b.param))) best = c;
  }
  return best;
}

CvResult cross_validate(const FunctionalDataset& data, const CvPlan& plan, const CvScorer& scorer) {
  plan.validate();
  const auto folds = make_folds(data.size(), plan.folds, plan.seed);
  const std::size_t k = folds.size();

  std::vector<FunctionalDataset> train, valid;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<Index> rest;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
    std::sort(rest.begin(), rest.end());
    train.push_back(data.subset(rest));
    valid.push_back(data.subset(folds[f]));
  }

  CvResult result;
  for (double l : plan.lambdas)
    for (double p : plan.params) result.table.push_back({l, p, std::vector<double>(k, kInf), 0.0});

  parallel_for(result.table.size() * k, plan.jobs, [&](std::size_t task) {
    CvCell& cell = result.table[task / k];
    const std::size_t f = task % k;
    double s = kInf;
    try {
      s = scorer(train[f], valid[f], cell.lambda, cell.param);
    } catch (const std::exception&) {
      s = kInf;
    }
    cell.fold_scores[f] = std::isfinite(s) ? s : kInf;
  });

  for (auto& cell : result.table) cell.score = aggregate(cell.fold_scores, plan.aggregate);
  result.best = select_best(result.table);
  return result;
}

LossSpec ModelTemplate::loss_for(double param) const {
  switch (family) {
    case LossFamily::Square: return square_loss();
    case LossFamily::Huber: return huber_loss(param, p.value());
    case LossFamily::EpsInsensitive: return eps_insensitive_loss(param, p);
  }
  throw ValidationError("unknown loss family");
}

FitOptions ModelTemplate::options_for(double lambda, double param) const {
  FitOptions o = options;
  o.lambda = lambda;
  o.loss = loss_for(param);
  return o;
}

CvScorer make_scorer(const ModelTemplate& tmpl) {
  return [tmpl](const FunctionalDataset& tr, const FunctionalDataset& va, double lambda, double param) {
    const ForModel model = fit(tr.inputs, tr.outputs, tr.output_grid, tmpl.options_for(lambda, param));
    const Matrix pred = predict(model, va.inputs, va.output_grid->locations());
    return tmpl.metric == Metric::Mse ? mse(va.outputs, pred) : nmse(va.outputs, pred);
  };
}

CvResult cross_validate(const FunctionalDataset& data, const CvPlan& plan, const ModelTemplate& tmpl) {
  return cross_validate(data, plan, make_scorer(tmpl));
}

std::string format_fold_table(const CvResult& result) {
  std::string out = "lambda,loss_param,fold,mse\n";
  for (const auto& cell : result.table)
    for (std::size_t f = 0; f < cell.fold_scores.size(); ++f) {
      append_number(out, cell.lambda);
      out += ',';
      append_number(out, cell.param);
      out += ',' + std::to_string(f) + ',';
      append_number(out, cell.fold_scores[f]);
      out += '\n';
    }
  return out;
}

std::string format_aggregate_table(const CvResult& result) {
  std::string out = "lambda,loss_param,score\n";
  for (const auto& cell : result.table) {
    append_number(out, cell.lambda);
    out += ',';
    append_number(out, cell.param);
    out += ',';
    append_number(out, cell.score);
    out += '\n';
  }
  return out;
}

void RobustnessRatioSpec::validate() const {
  if (p != 1 && p != 2) throw UnsupportedError("robustness ratio: p must be 1 or 2");
  if (levels.empty()) throw ValidationError("robustness ratio: no quantile levels");
}

RobustnessRatioResult robustness_ratio(const std::vector<DiscretizedFunction>& clean,
                                       const std::vector<DiscretizedFunction>& corrupted,
                                       const RobustnessRatioSpec& spec) {
  spec.validate();
  if (clean.size() != corrupted.size()) throw ValidationError("robustness ratio: residual lists differ in length");
  if (clean.empty()) throw ValidationError("robustness ratio: no residuals");
  const PNorm q = PNorm(static_cast<double>(spec.p)).conjugate();
  std::vector<double> norms;
  norms.reserve(clean.size());
  for (const auto& e : clean) norms.push_back(mc_norm(e, q));

  RobustnessRatioResult out;
  out.ratio = kInf;
  for (double level : spec.levels) {
    const double kappa = quantile(norms, level);
    out.kappas.push_back(kappa);
    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (kappa > 0.0) {
      const LossSpec h = huber_loss(kappa, spec.p);
      double acc = 0.0;
      bool usable = true;
      for (std::size_t i = 0; i < clean.size() && usable; ++i) {
        const double base = eval_loss(clean[i], h);
        if (!(base > 0.0)) usable = false;
        else acc += eval_loss(corrupted[i], h) / base;
      }
      if (usable) ratio = acc / static_cast<double>(clean.size());
    }
    out.ratios.push_back(ratio);
    if (!std::isnan(ratio) && ratio < out.ratio) {
      out.ratio = ratio;
      out.kappa = kappa;
    }
  }
  if (std::isinf(out.ratio)) throw NumericalError("robustness ratio: every kappa candidate gave a zero clean loss");
  return out;
}

}  // namespace foreg
