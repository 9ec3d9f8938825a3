#include "foreg/model.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "foreg/error.hpp"
#include "foreg/json_io.hpp"

namespace foreg {

using nlohmann::json;

ForModel::ForModel(ScalarKernel kx, ScalarKernel ktheta, double lambda, LossSpec loss, Matrix train_inputs,
                   GridPtr grid, Matrix coefficients, std::optional<EigenBasis> basis, SolveReport report)
    : kx_(std::move(kx)),
      ktheta_(std::move(ktheta)),
      lambda_(lambda),
      loss_(std::move(loss)),
      train_inputs_(std::move(train_inputs)),
      grid_(std::move(grid)),
      coefficients_(std::move(coefficients)),
      basis_(std::move(basis)),
      report_(std::move(report)) {
  if (coefficients_.rows() != train_inputs_.rows())
    throw ValidationError("ForModel: coefficient rows must equal the number of training samples");
  const Index expected = basis_ ? basis_->rank() : grid_->size();
  if (coefficients_.cols() != expected) throw ValidationError("ForModel: coefficient columns do not match representation");
}

ForModel ForModel::with_coefficients(Matrix coefficients) const {
  ForModel out = *this;
  if (coefficients.rows() != coefficients_.rows() || coefficients.cols() != coefficients_.cols())
    throw ValidationError("ForModel: coefficient shape mismatch");
  out.coefficients_ = std::move(coefficients);
  return out;
}

DualProblem assemble_problem(const Matrix& inputs, const Matrix& outputs, const GridPtr& grid, const FitOptions& options,
                             std::optional<EigenBasis>* basis_out) {
  if (!grid) throw ValidationError("fit: null grid");
  if (inputs.rows() < 1) throw ValidationError("fit: need at least one sample");
  if (outputs.rows() != inputs.rows()) throw ValidationError("fit: inputs/outputs sample count mismatch");
  if (outputs.cols() != grid->size()) throw ValidationError("fit: outputs do not match the grid");
  if (!outputs.allFinite() || !inputs.allFinite()) throw ValidationError("fit: non-finite data");

  Matrix kx = gram(options.kx, inputs);
  if (std::holds_alternative<SplineChoice>(options.representation)) {
    Matrix kt = gram(options.ktheta, grid->locations());
    return DualProblem::spline(std::move(kx), std::move(kt), outputs, options.lambda, options.loss);
  }
  const auto& choice = std::get<EigenChoice>(options.representation);
  EigenBasis basis = build_eigenbasis(options.ktheta, grid, choice.rank);
  Matrix r = project_data(basis, outputs);
  DualProblem p = DualProblem::eigen(std::move(kx), basis.eigenvalues, std::move(r), options.lambda, options.loss);
  if (basis_out) *basis_out = std::move(basis);
  return p;
}

ForModel fit(const Matrix& inputs, const Matrix& outputs, GridPtr grid, const FitOptions& options) {
  std::optional<EigenBasis> basis;
  const DualProblem problem = assemble_problem(inputs, outputs, grid, options, &basis);
  auto [a, report] = solve(problem, options.solver);
  return ForModel(options.kx, options.ktheta, options.lambda, options.loss, inputs, std::move(grid), std::move(a),
                  std::move(basis), std::move(report));
}

ForModel fit(const Matrix& inputs, const std::vector<DiscretizedFunction>& outputs, const FitOptions& options) {
  if (outputs.empty()) throw ValidationError("fit: no outputs");
  const GridPtr& grid = outputs.front().grid();
  Matrix y(static_cast<Index>(outputs.size()), grid->size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!same_grid(outputs[i], outputs.front())) throw ValidationError("fit: outputs must share one grid");
    y.row(static_cast<Index>(i)) = outputs[i].values().transpose();
  }
  return fit(inputs, y, grid, options);
}

Matrix predict(const ForModel& model, const Matrix& inputs, const Vector& locations) {
  if (inputs.cols() != model.train_inputs().cols()) throw ValidationError("predict: input dimension mismatch");
  const double n = static_cast<double>(model.n_train());
  const Matrix kx = cross_gram(model.kx(), inputs, model.train_inputs());
  if (model.representation() == Representation::Spline) {
    const GridPtr& grid = model.grid();
    const Matrix kt = cross_gram(model.ktheta(), locations, grid->locations());
    const double m = static_cast<double>(grid->size());
    return (kx * model.coefficients() * kt.transpose()) / (model.lambda() * n * m);
  }
  const EigenBasis& basis = *model.basis();
  const Matrix psi = extend_eigenfunctions(basis, locations);
  return (kx * model.coefficients() * basis.eigenvalues.asDiagonal() * psi.transpose()) / (model.lambda() * n);
}

Matrix predict(const ForModel& model, const Matrix& inputs) { return predict(model, inputs, model.grid()->locations()); }

DiscretizedFunction predict_function(const ForModel& model, const Vector& input) {
  Matrix x = input.transpose();
  Vector v = predict(model, x).row(0).transpose();
  return DiscretizedFunction(model.grid(), std::move(v));
}

double dual_sparsity(const ForModel& model) {
  const Matrix& a = model.coefficients();
  if (a.size() == 0) return 1.0;
  constexpr double tiny = 1e-12;
  bool rowwise = model.representation() == Representation::Eigen;
  if (const auto* h = std::get_if<HuberLoss>(&model.loss())) rowwise = rowwise || h->p.value() == 2.0;
  if (const auto* e = std::get_if<EpsInsensitiveLoss>(&model.loss())) rowwise = rowwise || e->p.value() == 2.0;
  if (rowwise) {
    Index zero_rows = 0;
    for (Index i = 0; i < a.rows(); ++i)
      if (a.row(i).cwiseAbs().maxCoeff() <= tiny) ++zero_rows;
    return static_cast<double>(zero_rows) / static_cast<double>(a.rows());
  }
  const Index zeros = (a.array().abs() <= tiny).count();
  return static_cast<double>(zeros) / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// archive

namespace {

constexpr char kMagic[] = "FOREG-ARCHIVE 1\n";
constexpr int kArchiveVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("archive: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_matrix(std::ostream& os, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) write_u64(os, std::bit_cast<std::uint64_t>(m(i, j)));
}

Matrix read_matrix(std::istream& is, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(read_u64(is));
  return m;
}

struct Entry {
  std::string name;
  const Matrix* data;
};

}  // namespace

void save_model(const ForModel& model, const std::filesystem::path& path) {
  const GridPtr& grid = model.grid();
  const Matrix locations = grid->locations();
  const Matrix weights = grid->weights();
  Matrix eigenvalues;
  std::vector<Entry> entries = {{"train_inputs", &model.train_inputs()},
                                {"grid_locations", &locations},
                                {"grid_weights", &weights},
                                {"coefficients", &model.coefficients()}};
  if (model.basis()) {
    eigenvalues = model.basis()->eigenvalues;
    entries.push_back({"eigenvalues", &eigenvalues});
    entries.push_back({"psi", &model.basis()->psi});
    entries.push_back({"gram_theta", &model.basis()->gram_theta});
  }

  json manifest;
  manifest["version"] = kArchiveVersion;
  manifest["kx"] = kernel_to_json(model.kx());
  manifest["ktheta"] = kernel_to_json(model.ktheta());
  manifest["lambda"] = model.lambda();
  manifest["loss"] = loss_to_json(model.loss());
  manifest["representation"] = to_string(model.representation());
  manifest["report"] = report_to_json(model.report());
  manifest["shapes"] = {{"n", model.n_train()},
                        {"input_dim", model.train_inputs().cols()},
                        {"m", grid->size()},
                        {"coefficient_cols", model.coefficients().cols()}};
  if (model.basis()) {
    manifest["eigen"] = {{"truncated", model.basis()->truncated}, {"requested_rank", model.basis()->requested_rank}};
  }
  std::uint64_t offset = 0;
  json mats = json::array();
  for (const Entry& e : entries) {
    mats.push_back({{"name", e.name}, {"rows", e.data->rows()}, {"cols", e.data->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(e.data->size()) * 8u;
  }
  manifest["matrices"] = mats;
  manifest["byte_order"] = "little";
  manifest["dtype"] = "float64";

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("save_model: cannot open " + path.string());
  const std::string header = manifest.dump();
  os.write(kMagic, sizeof(kMagic) - 1);
  write_u64(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Entry& e : entries) write_matrix(os, *e.data);
  if (!os) throw IoError("save_model: write failed for " + path.string());
}

ForModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_model: cannot open " + path.string());
  std::string magic(sizeof(kMagic) - 1, '\0');
  is.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!is || magic != kMagic) throw IoError("load_model: not a model archive: " + path.string());
  const std::uint64_t len = read_u64(is);
  if (len > (1u << 30)) throw IoError("load_model: implausible header length");
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError("load_model: truncated manifest");

  json manifest;
  try {
    manifest = json::parse(header);
  } catch (const json::exception& e) {
    throw IoError(std::string("load_model: bad manifest: ") + e.what());
  }
  if (manifest.value("version", 0) != kArchiveVersion) throw IoError("load_model: unsupported archive version");

  const std::streamoff payload = is.tellg();
  auto read_named = [&](const std::string& name) -> Matrix {
    for (const json& m : manifest.at("matrices")) {
      if (m.at("name") == name) {
        is.seekg(payload + static_cast<std::streamoff>(m.at("offset").get<std::uint64_t>()));
        Matrix out = read_matrix(is, m.at("rows").get<Index>(), m.at("cols").get<Index>());
        if (!is) throw IoError("load_model: truncated payload for " + name);
        return out;
      }
    }
    throw IoError("load_model: missing matrix " + name);
  };

  Matrix inputs = read_named("train_inputs");
  Vector locations = read_named("grid_locations").col(0);
  Vector weights = read_named("grid_weights").col(0);
  Matrix coefficients = read_named("coefficients");
  GridPtr grid = make_grid(Grid(std::move(locations), std::move(weights)));
  ScalarKernel kx = kernel_from_json(manifest.at("kx"));
  ScalarKernel kt = kernel_from_json(manifest.at("ktheta"));

  std::optional<EigenBasis> basis;
  if (manifest.at("representation") == "eigen") {
    EigenBasis b;
    b.grid = grid;
    b.eigenvalues = read_named("eigenvalues").col(0);
    b.psi = read_named("psi");
    b.gram_theta = read_named("gram_theta");
    b.kernel = kt;
    if (manifest.contains("eigen")) {
      b.truncated = manifest["eigen"].value("truncated", false);
      b.requested_rank = manifest["eigen"].value("requested_rank", b.eigenvalues.size());
    }
    basis = std::move(b);
  }
  SolveReport report;
  const json& r = manifest.at("report");
  report.objective = r.value("objective", 0.0);
  report.iterations = r.value("iterations", Index{0});
  report.restarts = r.value("restarts", Index{0});
  report.converged = r.value("converged", false);
  report.warm_start_failed = r.value("warm_start_failed", false);
  report.final_step = r.value("final_step", 0.0);
  report.trace = {report.objective};

  return ForModel(std::move(kx), std::move(kt), manifest.at("lambda").get<double>(), loss_from_json(manifest.at("loss")),
                  std::move(inputs), std::move(grid), std::move(coefficients), std::move(basis), std::move(report));
}

}  // namespace foreg
