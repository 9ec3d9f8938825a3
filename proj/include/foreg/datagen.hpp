#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "foreg/funcspace.hpp"

namespace foreg {

/// n paired functions: inputs sampled on input_grid, outputs on output_grid.
struct FunctionalDataset {
  Matrix inputs;  // n x m_in
  GridPtr input_grid;
  Matrix outputs;  // n x m_out
  GridPtr output_grid;

  Index size() const { return outputs.rows(); }
  /// Rows `idx` of both sides, same grids.
  FunctionalDataset subset(const std::vector<Index>& idx) const;
  std::vector<DiscretizedFunction> output_functions() const;
};

struct SynthConfig {
  Index n = 200;
  Vector sigma_in = (Vector(4) << 0.05, 0.1, 0.5, 0.7).finished();
  Vector sigma_out = (Vector(4) << 0.05, 0.1, 0.5, 0.7).finished();
  GridPtr grid_in = make_grid(Grid::linspace(0.0, 1.0, 100));
  GridPtr grid_out = make_grid(Grid::linspace(0.0, 1.0, 100));
  std::uint64_t seed = 0;
  /// Seed for the fixed GP atoms; defaults to `seed`.
  std::optional<std::uint64_t> atom_seed;

  Index atoms() const { return sigma_in.size(); }
  void validate() const;
};

struct SyntheticDataset {
  FunctionalDataset data;
  Matrix atoms_in;   // r x m_in, one GP path per row
  Matrix atoms_out;  // r x m_out
  Matrix mixing;     // n x r, u_ic ~ U[-0.5, 0.5]
};

/// r GP atoms per side, fixed per atom seed, mixed with shared uniform
/// coefficients: x_i = sum_c u_ic g_c^in, y_i = sum_c u_ic g_c^out.
SyntheticDataset generate_synthetic(const SynthConfig& config);

/// `count` zero-mean GP paths with covariance exp(-(t - t')^2 / (2 sigma^2))
/// on `locations` (rows of the result). Cholesky with jitter 1e-10,
/// escalated x10 up to 1e-6.
Matrix sample_gp_paths(const Vector& locations, double sigma, Index count, std::mt19937_64& rng);

Matrix gp_covariance(const Vector& locations, double sigma);

/// Lower Cholesky factor of cov + jitter I, escalating jitter on failure.
Matrix jittered_cholesky(const Matrix& cov);

/// Adds i.i.d. N(0, sigma^2) noise to every observation.
Matrix add_gaussian_noise(const Matrix& values, double sigma, std::uint64_t seed);

// ---------------------------------------------------------------------------
// outliers

struct Type1Outliers {};
enum class Type2Mode { Replace, Add };
struct Type2Outliers {
  Vector sigma = (Vector(4) << 0.01, 0.05, 1.0, 4.0).finished();
  double zeta = 2.0;
  Type2Mode mode = Type2Mode::Add;
};
struct Type3Outliers {
  double xi = 0.1;
};

struct OutlierSpec {
  std::variant<Type1Outliers, Type2Outliers, Type3Outliers> kind;
  double tau = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Contaminated {
  FunctionalDataset data;
  std::vector<Index> indices;  // sorted ascending
};

/// Draws floor(tau n) indices without replacement and corrupts their outputs:
///   Type1  y_i <- -y_omega(i), omega the cyclic shift over the sorted indices
///   Type2  y_i <- sum_c a_ic g_c (Replace) or y_i + sum_c a_ic g_c (Add),
///          fresh GP atoms g_c with the given sigmas, a_ic ~ U[-zeta/2, zeta/2]
///   Type3  floor(xi m) random locations of y_i <- U[-b_max, b_max]
/// Inputs and untouched outputs are left bit-identical.
Contaminated contaminate(const FunctionalDataset& data, const OutlierSpec& spec);

/// Indices that contaminate() would draw for this n and spec.
std::vector<Index> draw_contamination_indices(Index n, const OutlierSpec& spec);

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvTable {
  std::optional<Vector> grid;  // from a `theta:` header row
  Matrix values;               // NaN marks missing cells
};

/// Parses a rectangular numeric CSV. Empty or NaN cells are missing.
CsvTable read_csv_table(const std::filesystem::path& path);
CsvTable parse_csv_table(const std::string& text);

/// Fills missing cells row by row: linear interpolation in theta for
/// interior gaps, nearest observed value at the ends.
Matrix fill_missing(const Matrix& values, const Vector& grid);

/// CSV file to functions. The grid comes from the header row or, if given,
/// from `grid_path` (one value per line or a single row).
std::vector<DiscretizedFunction> ingest_csv(const std::filesystem::path& values_path,
                                            const std::optional<std::filesystem::path>& grid_path = std::nullopt);

/// Matrix + grid form of ingest_csv().
std::pair<Matrix, GridPtr> ingest_csv_matrix(const std::filesystem::path& values_path,
                                             const std::optional<std::filesystem::path>& grid_path = std::nullopt);

/// Writes `theta:` header (when a grid is given) then one row per sample,
/// with round-trip precision.
void write_csv(const std::filesystem::path& path, const Matrix& values, const Vector* grid);
std::string format_csv(const Matrix& values, const Vector* grid);

// ---------------------------------------------------------------------------
// MFCC sequences

/// Mirror-pads a frames x coefficients sequence about its final frame up to
/// `length` frames.
Matrix mirror_pad(const Matrix& sequence, Index length);

struct MfccStats {
  Vector mean;
  Vector stddev;
  std::vector<Index> clamped;  // coefficients whose std was 0 and set to 1
};

/// Per-coefficient mean/std over every sequence and frame.
MfccStats mfcc_statistics(const std::vector<Matrix>& sequences);
std::vector<Matrix> apply_standardization(const std::vector<Matrix>& sequences, const MfccStats& stats);

struct StandardizedMfcc {
  std::vector<Matrix> sequences;
  MfccStats stats;
};
StandardizedMfcc standardize_mfcc(const std::vector<Matrix>& sequences);

/// Row-major flattening of each sequence, as consumed by the integral kernel.
Matrix flatten_sequences(const std::vector<Matrix>& sequences);

// ---------------------------------------------------------------------------
// dataset bundles: inputs.csv, outputs.csv, meta.json

void write_bundle(const std::filesystem::path& dir, const FunctionalDataset& data, const std::string& meta_json);
FunctionalDataset read_bundle(const std::filesystem::path& dir);

}  // namespace foreg
