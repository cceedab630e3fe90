#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/Eigenvalues>

#include "qc4qa/error.hpp"
#include "qc4qa/qc.hpp"

namespace qc4qa {

Pca2d pca_2d(const Matrix& features) {
  const auto n = features.rows();
  const auto d = features.cols();
  if (n < 2) throw ValidationError("pca_2d: need at least two rows");
  Pca2d out;
  out.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - out.mean.transpose();
  if (centered.cwiseAbs().maxCoeff() == 0.0) throw ValidationError("pca_2d: input has rank 0 (all rows equal)");

  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca_2d: eigendecomposition failed");

  out.components = Matrix::Zero(2, d);
  for (int c = 0; c < 2 && c < d; ++c) {
    // Eigenvalues come back in ascending order.
    const auto idx = d - 1 - c;
    Vector v = solver.eigenvectors().col(idx);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.components.row(c) = v.transpose();
    out.variances[static_cast<std::size_t>(c)] = std::max(0.0, solver.eigenvalues()(idx));
  }
  out.projections = centered * out.components.transpose();
  return out;
}

void export_pca_2d(const Matrix& features, std::span<const int> labels, const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw ShapeError("export_pca_2d: label count does not match row count");
  }
  const Pca2d pca = pca_2d(features);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "pc1,pc2,label\n";
  char buf[96];
  for (Eigen::Index i = 0; i < pca.projections.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", pca.projections(i, 0), pca.projections(i, 1),
                  labels[static_cast<std::size_t>(i)]);
    out << buf;
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace qc4qa
