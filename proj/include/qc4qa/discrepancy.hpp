#pragma once

#include <map>
#include <span>
#include <vector>

#include "qc4qa/data.hpp"
#include "qc4qa/model.hpp"

namespace qc4qa {

// Bandwidth of k(x, y) = exp(-||x - y||^2 / gamma).
struct KernelConfig {
  enum class Mode { Fixed, MedianHeuristic };
  Mode mode = Mode::MedianHeuristic;
  double gamma = 1.0;  // used when mode == Fixed
  double epsilon_floor = 1e-6;
};

double gaussian_kernel(const Vector& x, const Vector& y, double gamma);

// Biased squared MMD between the rows of `a` and the rows of `b`:
//   1/n^2 sum k(a_i, a_j) + 1/m^2 sum k(b_i, b_j) - 2/(nm) sum k(a_i, b_j).
// The within-set sums visit each unordered pair once, so the result is
// symmetric in (a, b) up to rounding (|diff| <= 1e-12 in practice).
double mmd_sq(const Matrix& a, const Matrix& b, double gamma);

struct MmdGradient {
  double value = 0.0;
  Matrix grad_a;  // d mmd / d a, same shape as a
  Matrix grad_b;
};

// Exact gradient of mmd_sq with gamma held constant.
MmdGradient mmd_sq_grad(const Matrix& a, const Matrix& b, double gamma);

// Inter-domain answer-feature discrepancy.
double caqa_loss(const Matrix& source_answer_feats, const Matrix& target_answer_feats, double gamma);
MmdGradient caqa_loss_grad(const Matrix& source_answer_feats, const Matrix& target_answer_feats,
                           double gamma);

// Per-class grouping of one mini-batch's source and target feature rows.
struct ClassPartition {
  struct Bucket {
    std::vector<int> source_rows;
    std::vector<int> target_rows;
  };
  Matrix source;
  Matrix target;
  std::map<QuestionClass, Bucket> buckets;

  static ClassPartition build(Matrix source, std::span<const QuestionClass> source_classes,
                              Matrix target, std::span<const QuestionClass> target_classes);
  // Classes with at least one source and one target row.
  int qualifying_classes() const;
};

// Mean of per-class mmd_sq over classes present in both domains; 0 when none.
double qc4qa_loss(const ClassPartition& partition, double gamma);
MmdGradient qc4qa_loss_grad(const ClassPartition& partition, double gamma);

// Median of pairwise squared distances (floored), or the fixed gamma.
double resolve_bandwidth(const Matrix& rows, const KernelConfig& config);

std::vector<double> pairwise_sq_distances(const Matrix& rows);

}  // namespace qc4qa
