#include "foreg/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "foreg/error.hpp"

namespace foreg {

namespace {

enum Stream : std::uint32_t {
  kAtomsIn = 1,
  kAtomsOut = 2,
  kMixing = 3,
  kNoise = 4,
  kPickIndices = 10,
  kCorrupt = 11,
};

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

double parse_cell(std::string_view cell, std::size_t line) {
  cell = trim(cell);
  if (cell.empty()) return kNan;
  if (cell == "nan" || cell == "NaN" || cell == "NAN" || cell == "NA") return kNan;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ValidationError("csv line " + std::to_string(line) + ": not a number '" + std::string(cell) + "'");
  if (!std::isfinite(v)) throw ValidationError("csv line " + std::to_string(line) + ": non-finite value");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

void append_number(std::string& out, double v) {
  if (std::isnan(v)) return;  // missing
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  out.append(buf, ptr);
}

Matrix rows_of(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = m.row(idx[k]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

FunctionalDataset FunctionalDataset::subset(const std::vector<Index>& idx) const {
  for (Index i : idx)
    if (i < 0 || i >= size()) throw ValidationError("subset: index out of range");
  return {rows_of(inputs, idx), input_grid, rows_of(outputs, idx), output_grid};
}

std::vector<DiscretizedFunction> FunctionalDataset::output_functions() const {
  std::vector<DiscretizedFunction> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) out.emplace_back(output_grid, outputs.row(i).transpose());
  return out;
}

void SynthConfig::validate() const {
  if (n < 1) throw ValidationError("synthetic: n must be >= 1");
  if (sigma_in.size() < 1) throw ValidationError("synthetic: need at least one atom");
  if (sigma_in.size() != sigma_out.size()) throw ValidationError("synthetic: sigma_in/sigma_out length mismatch");
  if (!(sigma_in.array() > 0.0).all() || !(sigma_out.array() > 0.0).all())
    throw ValidationError("synthetic: length-scales must be > 0");
  if (!grid_in || !grid_out) throw ValidationError("synthetic: missing grid");
}

Matrix gp_covariance(const Vector& locations, double sigma) {
  const Index m = locations.size();
  Matrix c(m, m);
  const double s = 2.0 * sigma * sigma;
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) {
      const double d = locations[a] - locations[b];
      c(a, b) = std::exp(-d * d / s);
    }
  return c;
}

Matrix jittered_cholesky(const Matrix& cov) {
  const Index m = cov.rows();
  for (double jitter = 1e-10; jitter <= 1e-6 * (1 + 1e-9); jitter *= 10.0) {
    Eigen::LLT<Matrix> llt(cov + jitter * Matrix::Identity(m, m));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("GP covariance not positive definite even with jitter 1e-6");
}

Matrix sample_gp_paths(const Vector& locations, double sigma, Index count, std::mt19937_64& rng) {
  const Matrix l = jittered_cholesky(gp_covariance(locations, sigma));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(locations.size(), count);
  for (Index c = 0; c < count; ++c)
    for (Index j = 0; j < locations.size(); ++j) z(j, c) = normal(rng);
  return (l * z).transpose();
}

SyntheticDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  const Index r = config.atoms();
  const std::uint64_t atom_seed = config.atom_seed.value_or(config.seed);

  SyntheticDataset out;
  out.atoms_in.resize(r, config.grid_in->size());
  out.atoms_out.resize(r, config.grid_out->size());
  auto rng_in = seeded(atom_seed, kAtomsIn);
  auto rng_out = seeded(atom_seed, kAtomsOut);
  for (Index c = 0; c < r; ++c) {
    out.atoms_in.row(c) = sample_gp_paths(config.grid_in->locations(), config.sigma_in[c], 1, rng_in);
    out.atoms_out.row(c) = sample_gp_paths(config.grid_out->locations(), config.sigma_out[c], 1, rng_out);
  }

  auto rng_mix = seeded(config.seed, kMixing);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  out.mixing.resize(config.n, r);
  for (Index i = 0; i < config.n; ++i)
    for (Index c = 0; c < r; ++c) out.mixing(i, c) = u(rng_mix);

  out.data = {out.mixing * out.atoms_in, config.grid_in, out.mixing * out.atoms_out, config.grid_out};
  return out;
}

Matrix add_gaussian_noise(const Matrix& values, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ValidationError("noise: sigma must be >= 0");
  auto rng = seeded(seed, kNoise);
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix out = values;
  if (sigma == 0.0) return out;
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) += normal(rng);
  return out;
}

// ---------------------------------------------------------------------------

void OutlierSpec::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("outliers: tau must lie in [0, 1]");
  if (const auto* t2 = std::get_if<Type2Outliers>(&kind)) {
    if (t2->sigma.size() < 1) throw ValidationError("outliers: type 2 needs at least one length-scale");
    if (!(t2->sigma.array() > 0.0).all()) throw ValidationError("outliers: type 2 length-scales must be > 0");
    if (!(t2->zeta > 0.0)) throw ValidationError("outliers: zeta must be > 0");
  }
  if (const auto* t3 = std::get_if<Type3Outliers>(&kind)) {
    if (!(t3->xi >= 0.0 && t3->xi <= 1.0)) throw ValidationError("outliers: xi must lie in [0, 1]");
  }
}

std::vector<Index> draw_contamination_indices(Index n, const OutlierSpec& spec) {
  spec.validate();
  const auto count = static_cast<Index>(std::floor(spec.tau * static_cast<double>(n) + 1e-12));
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  auto rng = seeded(spec.seed, kPickIndices);
  // partial Fisher-Yates
  for (Index k = 0; k < count; ++k) {
    std::uniform_int_distribution<Index> pick(k, n - 1);
    std::swap(all[static_cast<std::size_t>(k)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

Contaminated contaminate(const FunctionalDataset& data, const OutlierSpec& spec) {
  spec.validate();
  const Index n = data.size();
  Contaminated out{data, draw_contamination_indices(n, spec)};
  const auto& idx = out.indices;
  if (idx.empty()) {
    if (std::holds_alternative<Type1Outliers>(spec.kind) && spec.tau > 0.0)
      throw ValidationError("outliers: type 1 needs floor(tau n) >= 2");
    return out;
  }
  auto rng = seeded(spec.seed, kCorrupt);
  Matrix& y = out.data.outputs;
  const Index m = y.cols();

  std::visit(
      [&](const auto& kind) {
        using T = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<T, Type1Outliers>) {
          if (idx.size() < 2) throw ValidationError("outliers: type 1 needs floor(tau n) >= 2");
          for (std::size_t j = 0; j < idx.size(); ++j)
            y.row(idx[j]) = -data.outputs.row(idx[(j + 1) % idx.size()]);
        } else if constexpr (std::is_same_v<T, Type2Outliers>) {
          const Index r = kind.sigma.size();
          Matrix atoms(r, m);
          for (Index c = 0; c < r; ++c)
            atoms.row(c) = sample_gp_paths(data.output_grid->locations(), kind.sigma[c], 1, rng);
          std::uniform_real_distribution<double> coef(-0.5 * kind.zeta, 0.5 * kind.zeta);
          for (Index i : idx) {
            Vector a(r);
            for (Index c = 0; c < r; ++c) a[c] = coef(rng);
            const Vector g = atoms.transpose() * a;
            if (kind.mode == Type2Mode::Replace) y.row(i) = g.transpose();
            else y.row(i) += g.transpose();
          }
        } else {
          const double b_max = data.outputs.size() ? data.outputs.cwiseAbs().maxCoeff() : 0.0;
          const auto k = static_cast<Index>(std::floor(kind.xi * static_cast<double>(m) + 1e-12));
          std::uniform_real_distribution<double> noise(-b_max, b_max);
          std::vector<Index> cols(static_cast<std::size_t>(m));
          for (Index i : idx) {
            std::iota(cols.begin(), cols.end(), Index{0});
            for (Index t = 0; t < k; ++t) {
              std::uniform_int_distribution<Index> pick(t, m - 1);
              std::swap(cols[static_cast<std::size_t>(t)], cols[static_cast<std::size_t>(pick(rng))]);
              y(i, cols[static_cast<std::size_t>(t)]) = noise(rng);
            }
          }
        }
      },
      spec.kind);
  return out;
}

// ---------------------------------------------------------------------------

CsvTable parse_csv_table(const std::string& text) {
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.rfind("theta:", 0) == 0) {
      if (table.grid || !rows.empty()) throw ValidationError("csv line " + std::to_string(line_no) + ": misplaced grid header");
      const auto cells = split(line.substr(6), ',');
      Vector g(static_cast<Index>(cells.size()));
      for (std::size_t j = 0; j < cells.size(); ++j) {
        g[static_cast<Index>(j)] = parse_cell(cells[j], line_no);
        if (std::isnan(g[static_cast<Index>(j)])) throw ValidationError("csv: missing grid location");
      }
      table.grid = std::move(g);
      continue;
    }
    std::vector<double> row;
    for (auto cell : split(line, ',')) row.push_back(parse_cell(cell, line_no));
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError("csv line " + std::to_string(line_no) + ": ragged row");
    rows.push_back(std::move(row));
  }
  const Index cols = rows.empty() ? (table.grid ? table.grid->size() : 0) : static_cast<Index>(rows.front().size());
  if (table.grid && table.grid->size() != cols) throw ValidationError("csv: grid header length != row length");
  table.values.resize(static_cast<Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Index j = 0; j < cols; ++j) table.values(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return table;
}

CsvTable read_csv_table(const std::filesystem::path& path) { return parse_csv_table(read_text(path)); }

Matrix fill_missing(const Matrix& values, const Vector& grid) {
  if (grid.size() != values.cols()) throw ValidationError("fill_missing: grid length != columns");
  Matrix out = values;
  const Index m = values.cols();
  for (Index i = 0; i < values.rows(); ++i) {
    std::vector<Index> seen;
    for (Index j = 0; j < m; ++j)
      if (!std::isnan(values(i, j))) seen.push_back(j);
    if (seen.empty()) throw ValidationError("csv: row " + std::to_string(i) + " has no observed values");
    std::size_t next = 0;
    for (Index j = 0; j < m; ++j) {
      while (next < seen.size() && seen[next] < j) ++next;
      if (next < seen.size() && seen[next] == j) continue;
      if (next == 0) out(i, j) = values(i, seen.front());
      else if (next == seen.size()) out(i, j) = values(i, seen.back());
      else {
        const Index a = seen[next - 1], b = seen[next];
        const double t = (grid[j] - grid[a]) / (grid[b] - grid[a]);
        out(i, j) = (1.0 - t) * values(i, a) + t * values(i, b);
      }
    }
  }
  return out;
}

std::pair<Matrix, GridPtr> ingest_csv_matrix(const std::filesystem::path& values_path,
                                             const std::optional<std::filesystem::path>& grid_path) {
  CsvTable table = read_csv_table(values_path);
  Vector locations;
  if (grid_path) {
    const std::string text = read_text(*grid_path);
    std::vector<double> g;
    std::string token;
    for (char ch : text + "\n") {
      if (ch == ',' || ch == '\n' || ch == ' ' || ch == '\t' || ch == '\r') {
        if (!trim(token).empty()) g.push_back(parse_cell(token, 0));
        token.clear();
      } else {
        token += ch;
      }
    }
    locations = Eigen::Map<Vector>(g.data(), static_cast<Index>(g.size()));
  } else if (table.grid) {
    locations = *table.grid;
  } else {
    throw ValidationError("csv: no grid header and no grid file for " + values_path.string());
  }
  if (locations.size() != table.values.cols()) throw ValidationError("csv: grid length != number of columns");
  for (Index j = 1; j < locations.size(); ++j)
    if (!(locations[j] > locations[j - 1])) throw ValidationError("csv: grid must be strictly increasing");
  GridPtr grid = make_grid(Grid(locations));
  return {fill_missing(table.values, locations), grid};
}

std::vector<DiscretizedFunction> ingest_csv(const std::filesystem::path& values_path,
                                            const std::optional<std::filesystem::path>& grid_path) {
  auto [values, grid] = ingest_csv_matrix(values_path, grid_path);
  std::vector<DiscretizedFunction> out;
  out.reserve(static_cast<std::size_t>(values.rows()));
  for (Index i = 0; i < values.rows(); ++i) out.emplace_back(grid, values.row(i).transpose());
  return out;
}

std::string format_csv(const Matrix& values, const Vector* grid) {
  std::string out;
  if (grid) {
    out += "theta:";
    for (Index j = 0; j < grid->size(); ++j) {
      if (j) out += ',';
      append_number(out, (*grid)[j]);
    }
    out += '\n';
  }
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out += ',';
      append_number(out, values(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Matrix& values, const Vector* grid) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << format_csv(values, grid);
  if (!f) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

Matrix mirror_pad(const Matrix& sequence, Index length) {
  const Index t = sequence.rows();
  if (t < 1) throw ValidationError("mirror_pad: empty sequence");
  if (length < t) throw ValidationError("mirror_pad: target shorter than sequence");
  Matrix out(length, sequence.cols());
  out.topRows(t) = sequence;
  if (t == 1) {
    for (Index k = 1; k < length; ++k) out.row(k) = sequence.row(0);
    return out;
  }
  // reflect about the last frame, bouncing back at the first when needed
  const Index period = 2 * (t - 1);
  for (Index k = t; k < length; ++k) {
    Index s = k % period;
    if (s >= t) s = period - s;
    out.row(k) = sequence.row(s);
  }
  return out;
}

MfccStats mfcc_statistics(const std::vector<Matrix>& sequences) {
  if (sequences.empty()) throw ValidationError("mfcc: no sequences");
  const Index c = sequences.front().cols();
  Vector sum = Vector::Zero(c);
  double count = 0.0;
  for (const auto& s : sequences) {
    if (s.cols() != c) throw ValidationError("mfcc: coefficient count differs between sequences");
    sum += s.colwise().sum().transpose();
    count += static_cast<double>(s.rows());
  }
  if (count == 0.0) throw ValidationError("mfcc: sequences have no frames");
  MfccStats st;
  st.mean = sum / count;
  Vector sq = Vector::Zero(c);
  for (const auto& s : sequences) sq += (s.rowwise() - st.mean.transpose()).colwise().squaredNorm().transpose();
  st.stddev = (sq / count).cwiseSqrt();
  for (Index k = 0; k < c; ++k) {
    if (!(st.stddev[k] > 1e-14 * std::max(1.0, std::abs(st.mean[k])))) {
      st.stddev[k] = 1.0;
      st.clamped.push_back(k);
    }
  }
  return st;
}

std::vector<Matrix> apply_standardization(const std::vector<Matrix>& sequences, const MfccStats& stats) {
  std::vector<Matrix> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    if (s.cols() != stats.mean.size()) throw ValidationError("mfcc: coefficient count differs from statistics");
    Matrix z = s.rowwise() - stats.mean.transpose();
    z.array().rowwise() /= stats.stddev.transpose().array();
    out.push_back(std::move(z));
  }
  return out;
}

StandardizedMfcc standardize_mfcc(const std::vector<Matrix>& sequences) {
  MfccStats st = mfcc_statistics(sequences);
  return {apply_standardization(sequences, st), std::move(st)};
}

Matrix flatten_sequences(const std::vector<Matrix>& sequences) {
  if (sequences.empty()) return Matrix(0, 0);
  const Index len = sequences.front().size();
  Matrix out(static_cast<Index>(sequences.size()), len);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    if (s.size() != len) throw ValidationError("flatten: sequences must share a shape");
    for (Index a = 0; a < s.rows(); ++a)
      for (Index b = 0; b < s.cols(); ++b) out(static_cast<Index>(i), a * s.cols() + b) = s(a, b);
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_bundle(const std::filesystem::path& dir, const FunctionalDataset& data, const std::string& meta_json) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_csv(dir / "inputs.csv", data.inputs, &data.input_grid->locations());
  write_csv(dir / "outputs.csv", data.outputs, &data.output_grid->locations());
  std::ofstream f(dir / "meta.json", std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + (dir / "meta.json").string());
  f << meta_json;
}

FunctionalDataset read_bundle(const std::filesystem::path& dir) {
  auto [x, gx] = ingest_csv_matrix(dir / "inputs.csv");
  auto [y, gy] = ingest_csv_matrix(dir / "outputs.csv");
  if (x.rows() != y.rows()) throw ValidationError("bundle: inputs and outputs have different sample counts");
  return {std::move(x), std::move(gx), std::move(y), std::move(gy)};
}

}  // namespace foreg
