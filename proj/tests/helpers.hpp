#pragma once
// Independent reference implementations and fixtures shared by the unit and
// acceptance tests. Nothing here calls into the code it checks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <functional>
#include <string>
#include <vector>

#include "qc4qa/adapt.hpp"
#include "qc4qa/data.hpp"
#include "qc4qa/model.hpp"
#include "qc4qa/rng.hpp"

namespace qc4qa::testing {

inline Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Literal transcription of the biased estimator: three double sums, every
// kernel value recomputed from scratch.
inline double naive_mmd_sq(const Matrix& a, const Matrix& b, double gamma) {
  auto k = [gamma](const auto& x, const auto& y) {
    double d2 = 0.0;
    for (Eigen::Index t = 0; t < x.size(); ++t) d2 += (x[t] - y[t]) * (x[t] - y[t]);
    return std::exp(-d2 / gamma);
  };
  const double n = static_cast<double>(a.rows()), m = static_cast<double>(b.rows());
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.rows(); ++j) saa += k(a.row(i), a.row(j));
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) sbb += k(b.row(i), b.row(j));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) sab += k(a.row(i), b.row(j));
  return saa / (n * n) + sbb / (m * m) - 2.0 * sab / (n * m);
}

inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central difference of f with respect to *x.
inline double central_diff(double* x, double h, const std::function<double()>& f) {
  const double saved = *x;
  *x = saved + h;
  const double up = f();
  *x = saved - h;
  const double down = f();
  *x = saved;
  return (up - down) / (2.0 * h);
}

// Exhaustive argmax over s <= e with the documented tie-break: the first
// pair in (s, e) lexicographic order wins.
inline DecodedSpan brute_decode(const Vector& ps, const Vector& pe, std::optional<int> max_len = std::nullopt) {
  DecodedSpan best{{0, 0}, -1.0};
  std::vector<std::pair<Span, double>> all;
  for (int s = 0; s < ps.size(); ++s)
    for (int e = s; e < pe.size(); ++e)
      if (!max_len || e - s < *max_len) all.push_back({{s, e}, ps[s] * pe[e]});
  double top = -1.0;
  for (const auto& [sp, c] : all) top = std::max(top, c);
  for (const auto& [sp, c] : all) {
    if (c == top) return {sp, c};
  }
  return best;
}

inline Vector random_simplex(int n, Rng& rng) {
  Vector p(n);
  for (int i = 0; i < n; ++i) p[i] = -std::log(1.0 - rng.uniform01());
  return p / p.sum();
}

// Small hand-built sample over a given vocabulary size.
// distinct: no repeated context tokens, so every position is identifiable.
inline QASample toy_sample(std::string id, int vocab, int ctx_len, Rng& rng, Domain d = Domain::Source,
                           bool distinct = false) {
  QASample s;
  s.id = std::move(id);
  s.domain = d;
  for (int i = 0; i < 4; ++i) s.question.push_back(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(vocab))));
  if (distinct) {
    std::vector<int> pool(static_cast<std::size_t>(vocab));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < ctx_len; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + rng.uniform_index(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      s.context.push_back(pool[static_cast<std::size_t>(i)]);
    }
  } else {
    for (int i = 0; i < ctx_len; ++i) s.context.push_back(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(vocab))));
  }
  const int a = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(ctx_len)));
  const int b = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(ctx_len)));
  s.answer = Span{std::min(a, b), std::max(a, b)};
  s.qclass = QuestionClass::coarse(static_cast<CoarseClass>(rng.uniform_index(kNumCoarseClasses)));
  return s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("qc4qa_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) return {};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

}  // namespace qc4qa::testing
