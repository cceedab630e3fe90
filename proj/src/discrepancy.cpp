#include "qc4qa/discrepancy.hpp"

#include <algorithm>
#include <cmath>

#include "qc4qa/error.hpp"

namespace qc4qa {
namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("kernel bandwidth gamma must be positive");
}

void check_sets(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ValidationError("mmd_sq: feature sets must be nonempty");
  if (a.cols() != b.cols()) throw ShapeError("mmd_sq: feature sets have different dimensions");
}

double kernel_rows(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j, double gamma) {
  return std::exp(-(a.row(i) - b.row(j)).squaredNorm() / gamma);
}

// Sum of k over all ordered pairs within one set, using symmetry.
double within_sum(const Matrix& x, double gamma) {
  const auto n = x.rows();
  double off = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) off += kernel_rows(x, i, x, j, gamma);
  }
  return static_cast<double>(n) + 2.0 * off;
}

double cross_sum(const Matrix& a, const Matrix& b, double gamma) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) s += kernel_rows(a, i, b, j, gamma);
  }
  return s;
}

Matrix gather(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

double gaussian_kernel(const Vector& x, const Vector& y, double gamma) {
  check_gamma(gamma);
  if (x.size() != y.size()) throw ShapeError("gaussian_kernel: dimension mismatch");
  return std::exp(-(x - y).squaredNorm() / gamma);
}

double mmd_sq(const Matrix& a, const Matrix& b, double gamma) {
  check_gamma(gamma);
  check_sets(a, b);
  const auto n = static_cast<double>(a.rows());
  const auto m = static_cast<double>(b.rows());
  return within_sum(a, gamma) / (n * n) + within_sum(b, gamma) / (m * m) -
         2.0 * cross_sum(a, b, gamma) / (n * m);
}

MmdGradient mmd_sq_grad(const Matrix& a, const Matrix& b, double gamma) {
  check_gamma(gamma);
  check_sets(a, b);
  const auto n = a.rows();
  const auto m = b.rows();
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  const double mm = static_cast<double>(m) * static_cast<double>(m);
  const double nm = static_cast<double>(n) * static_cast<double>(m);
  const double c = -2.0 / gamma;  // dk(x,y)/dx = k(x,y) * c * (x - y)

  MmdGradient g;
  g.grad_a = Matrix::Zero(n, a.cols());
  g.grad_b = Matrix::Zero(m, b.cols());
  double saa = 0.0, sbb = 0.0, sab = 0.0;

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double k = kernel_rows(a, i, a, j, gamma);
      saa += k;
      const Eigen::RowVectorXd term = (2.0 / nn) * k * c * (a.row(i) - a.row(j));
      g.grad_a.row(i) += term;
      g.grad_a.row(j) -= term;
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double k = kernel_rows(b, i, b, j, gamma);
      sbb += k;
      const Eigen::RowVectorXd term = (2.0 / mm) * k * c * (b.row(i) - b.row(j));
      g.grad_b.row(i) += term;
      g.grad_b.row(j) -= term;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double k = kernel_rows(a, i, b, j, gamma);
      sab += k;
      const Eigen::RowVectorXd term = (2.0 / nm) * k * c * (a.row(i) - b.row(j));
      g.grad_a.row(i) -= term;
      g.grad_b.row(j) += term;
    }
  }
  g.value = (static_cast<double>(n) + 2.0 * saa) / nn + (static_cast<double>(m) + 2.0 * sbb) / mm -
            2.0 * sab / nm;
  return g;
}

double caqa_loss(const Matrix& source_answer_feats, const Matrix& target_answer_feats, double gamma) {
  return mmd_sq(source_answer_feats, target_answer_feats, gamma);
}

MmdGradient caqa_loss_grad(const Matrix& source_answer_feats, const Matrix& target_answer_feats,
                           double gamma) {
  return mmd_sq_grad(source_answer_feats, target_answer_feats, gamma);
}

ClassPartition ClassPartition::build(Matrix source, std::span<const QuestionClass> source_classes,
                                     Matrix target, std::span<const QuestionClass> target_classes) {
  if (static_cast<Eigen::Index>(source_classes.size()) != source.rows() ||
      static_cast<Eigen::Index>(target_classes.size()) != target.rows()) {
    throw ShapeError("ClassPartition: one class label is required per feature row");
  }
  if (source.rows() > 0 && target.rows() > 0 && source.cols() != target.cols()) {
    throw ShapeError("ClassPartition: source and target features have different dimensions");
  }
  ClassPartition p;
  for (std::size_t i = 0; i < source_classes.size(); ++i) {
    p.buckets[source_classes[i]].source_rows.push_back(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < target_classes.size(); ++i) {
    p.buckets[target_classes[i]].target_rows.push_back(static_cast<int>(i));
  }
  p.source = std::move(source);
  p.target = std::move(target);
  return p;
}

int ClassPartition::qualifying_classes() const {
  int q = 0;
  for (const auto& [cls, b] : buckets) {
    if (!b.source_rows.empty() && !b.target_rows.empty()) ++q;
  }
  return q;
}

double qc4qa_loss(const ClassPartition& partition, double gamma) {
  check_gamma(gamma);
  double total = 0.0;
  int q = 0;
  for (const auto& [cls, b] : partition.buckets) {
    if (b.source_rows.empty() || b.target_rows.empty()) continue;
    total += mmd_sq(gather(partition.source, b.source_rows), gather(partition.target, b.target_rows), gamma);
    ++q;
  }
  return q == 0 ? 0.0 : total / static_cast<double>(q);
}

MmdGradient qc4qa_loss_grad(const ClassPartition& partition, double gamma) {
  check_gamma(gamma);
  MmdGradient out;
  out.grad_a = Matrix::Zero(partition.source.rows(), partition.source.cols());
  out.grad_b = Matrix::Zero(partition.target.rows(), partition.target.cols());
  const int q = partition.qualifying_classes();
  if (q == 0) return out;
  const double scale = 1.0 / static_cast<double>(q);
  for (const auto& [cls, b] : partition.buckets) {
    if (b.source_rows.empty() || b.target_rows.empty()) continue;
    const MmdGradient g =
        mmd_sq_grad(gather(partition.source, b.source_rows), gather(partition.target, b.target_rows), gamma);
    out.value += g.value;
    for (std::size_t i = 0; i < b.source_rows.size(); ++i) {
      out.grad_a.row(b.source_rows[i]) += scale * g.grad_a.row(static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < b.target_rows.size(); ++i) {
      out.grad_b.row(b.target_rows[i]) += scale * g.grad_b.row(static_cast<Eigen::Index>(i));
    }
  }
  out.value *= scale;
  return out;
}

std::vector<double> pairwise_sq_distances(const Matrix& rows) {
  std::vector<double> d;
  const auto n = rows.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((rows.row(i) - rows.row(j)).squaredNorm());
  }
  return d;
}

double resolve_bandwidth(const Matrix& rows, const KernelConfig& config) {
  if (config.mode == KernelConfig::Mode::Fixed) {
    check_gamma(config.gamma);
    return config.gamma;
  }
  if (!(config.epsilon_floor > 0.0)) throw ValidationError("epsilon_floor must be positive");
  if (rows.rows() < 2) throw ValidationError("median heuristic needs at least two feature rows");
  std::vector<double> d = pairwise_sq_distances(rows);
  std::sort(d.begin(), d.end());
  const std::size_t mid = d.size() / 2;
  const double median = d.size() % 2 == 1 ? d[mid] : 0.5 * (d[mid - 1] + d[mid]);
  return std::max(median, config.epsilon_floor);
}

}  // namespace qc4qa
