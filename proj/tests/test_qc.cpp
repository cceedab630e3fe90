#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "qc4qa/error.hpp"
#include "qc4qa/qc.hpp"

using namespace qc4qa;
using testing::random_matrix;

namespace {

// Class c questions use only tokens [10c, 10c + 10).
std::vector<LabeledQuestion> separable_questions(int per_class, Rng& rng) {
  std::vector<LabeledQuestion> out;
  for (int c = 0; c < kNumCoarseClasses; ++c) {
    for (int i = 0; i < per_class; ++i) {
      LabeledQuestion q;
      q.label = static_cast<CoarseClass>(c);
      for (int t = 0; t < 3; ++t) q.tokens.push_back(10 * c + static_cast<int>(rng.uniform_index(10)));
      out.push_back(q);
    }
  }
  return out;
}

int brute_nearest(const Matrix& centroids, const Vector& x) {
  std::vector<double> d;
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) d.push_back((centroids.row(c).transpose() - x).squaredNorm());
  return static_cast<int>(std::min_element(d.begin(), d.end()) - d.begin());
}

Matrix two_blobs(int per_blob, Rng& rng, Vector& mu0, Vector& mu1, double sd = 0.3) {
  const int d = 3;
  mu0 = Vector::Zero(d);
  mu1 = Vector::Constant(d, 5.0);
  Matrix x(2 * per_blob, d);
  for (int i = 0; i < 2 * per_blob; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = (i < per_blob ? mu0[j] : mu1[j]) + sd * rng.normal();
  return x;
}

}  // namespace

TEST_CASE("argmax_class tie-break and one-hot") {
  CHECK(argmax_class(Vector::Zero(6)) == CoarseClass::ABBR);
  for (int c = 0; c < 6; ++c) {
    Vector l = Vector::Zero(6);
    l[c] = 1.0;
    CHECK(argmax_class(l) == static_cast<CoarseClass>(c));
  }
  Vector tie = Vector::Zero(6);
  tie[2] = tie[4] = 3.0;
  CHECK(argmax_class(tie) == CoarseClass::ENTY);
  CHECK_THROWS(argmax_class(Vector::Zero(5)));
}

TEST_CASE("classifier outputs a simplex and rejects bad features") {
  Rng rng(1);
  const QcMlp m = QcMlp::random(40, 8, 5, rng);
  const std::vector<int> q = {1, 5, 7};
  const Vector p = m.probabilities(m.question_feature(q));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.minCoeff() >= 0.0);
  CHECK_THROWS_AS(classify_feature(m, Vector::Zero(7)), ShapeError);
  CHECK(classify_feature(QcMlp::zeros(40, 8, 5), Vector::Zero(8)) == QuestionClass::coarse(CoarseClass::ABBR));
}

TEST_CASE("qc_backward matches finite differences") {
  Rng rng(2);
  QcMlp m = QcMlp::random(60, 4, 5, rng);
  const auto batch = separable_questions(2, rng);
  const auto g = qc_backward(m, batch);
  auto params = m.tensors();
  auto grads = g.grads.tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double num = testing::central_diff(&params[t][i], 1e-5, [&] { return qc_backward(m, batch).loss; });
      worst = std::max(worst, testing::rel_error(grads[t][i], num));
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("train_qc_mlp") {
  Rng rng(3);
  SUBCASE("defaults mirror the published settings") {
    const QcMlpConfig c;
    CHECK(c.epochs == 4);
    CHECK(c.lr == 0.01);
    CHECK(c.batch_size == 64);
  }
  SUBCASE("separable toy questions reach 100% training accuracy") {
    const auto qs = separable_questions(60, rng);
    QcMlpConfig cfg;
    cfg.val_fraction = 0.0;
    cfg.epochs = 20;
    const auto r = train_qc_mlp(qs, 60, cfg);
    CHECK(qc_accuracy(r.model, qs) == 1.0);
    CHECK(r.best_epoch >= 1);
  }
  SUBCASE("empty input and missing classes") {
    CHECK_THROWS_AS(train_qc_mlp({}, 10, QcMlpConfig{}), ValidationError);
    auto qs = separable_questions(5, rng);
    std::erase_if(qs, [](const LabeledQuestion& q) { return q.label == CoarseClass::LOC || q.label == CoarseClass::ABBR; });
    try {
      train_qc_mlp(qs, 60, QcMlpConfig{});
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      CHECK(what.find("ABBR") != std::string::npos);
      CHECK(what.find("LOC") != std::string::npos);
    }
  }
  SUBCASE("synthetic HUM question classifies as HUM") {
    const SyntheticSpec spec;
    const Corpus bank = generate_question_bank(spec, spec, 5452, 0.5, 5);
    const auto r = train_qc_mlp(labeled_questions(bank), static_cast<int>(bank.vocab.size()), QcMlpConfig{});
    const Corpus test = generate_question_bank(spec, spec, 300, 0.5, 6);
    int checked = 0;
    for (const auto& s : test.samples) {
      if (s.qclass->coarse_class() != CoarseClass::HUM) continue;
      ++checked;
      CHECK(classify(r.model, s.question) == QuestionClass::coarse(CoarseClass::HUM));
    }
    CHECK(checked > 20);
  }
}

TEST_CASE("classifier persistence") {
  const auto dir = testing::scratch_dir("qcmlp");
  Rng rng(4);
  const QcMlp m = QcMlp::random(30, 4, 3, rng);
  save_qc_mlp(m, dir / "m.json");
  const QcMlp back = load_qc_mlp(dir / "m.json");
  CHECK(back.embedding == m.embedding);
  CHECK(back.w2 == m.w2);
  CHECK(back.b2 == m.b2);
}

TEST_CASE("kmeans_fit basics") {
  Rng rng(5);
  SUBCASE("k=1 gives the mean") {
    const Matrix x = random_matrix(30, 4, rng);
    const auto m = kmeans_fit(x, 1, 7);
    CHECK((m.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("two separated blobs are recovered") {
    Vector mu0, mu1;
    const Matrix x = two_blobs(200, rng, mu0, mu1);
    const auto m = kmeans_fit(x, 2, 11);
    // Standard error of a 200-point blob mean per coordinate: 0.3/sqrt(200) ~ 0.021.
    const int first = m.centroids(0, 0) < 2.5 ? 0 : 1;
    CHECK((m.centroids.row(first).transpose() - mu0).norm() <= 0.1);
    CHECK((m.centroids.row(1 - first).transpose() - mu1).norm() <= 0.1);
  }
  SUBCASE("n < k is an error") { CHECK_THROWS_AS(kmeans_fit(random_matrix(2, 3, rng), 3, 1), ValidationError); }
  SUBCASE("duplicated points keep every cluster populated and finite") {
    Matrix x(40, 2);
    for (int i = 0; i < 40; ++i) x.row(i) << (i % 2 ? 1.0 : -1.0), 0.0;
    const auto m = kmeans_fit(x, 2, 3);
    CHECK(m.centroids.allFinite());
    std::vector<int> count(2, 0);
    for (int i = 0; i < 40; ++i) ++count[static_cast<std::size_t>(kmeans_assign(m, x.row(i).transpose()))];
    CHECK(count[0] == 20);
    CHECK(count[1] == 20);
  }
}

TEST_CASE("kmeans properties over many fits") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.uniform_index(80));
    const int k = 2 + static_cast<int>(rng.uniform_index(6));
    const Matrix x = random_matrix(n, 3, rng);
    const auto m = kmeans_fit(x, k, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 1; i < m.inertia_trace.size(); ++i) CHECK(m.inertia_trace[i] <= m.inertia_trace[i - 1] + 1e-12);
    CHECK(m.centroids.allFinite());
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int a = kmeans_assign(m, x.row(i).transpose());
      CHECK(a == brute_nearest(m.centroids, x.row(i).transpose()));
      ++count[static_cast<std::size_t>(a)];
    }
    for (int c : count) CHECK(c > 0);
    const auto again = kmeans_fit(x, k, static_cast<std::uint64_t>(trial));
    CHECK(again.centroids == m.centroids);
    CHECK(again.inertia_trace == m.inertia_trace);
  }
}

TEST_CASE("kmeans_assign tie-breaks and persistence") {
  KMeansModel m;
  m.k = 3;
  m.centroids = Matrix(3, 1);
  m.centroids << -1.0, 1.0, 4.0;
  CHECK(kmeans_assign(m, Vector::Constant(1, 4.0)) == 2);
  CHECK(kmeans_assign(m, Vector::Constant(1, 0.0)) == 0);
  CHECK_THROWS_AS(kmeans_assign(m, Vector::Zero(2)), ShapeError);

  const auto dir = testing::scratch_dir("kmeans");
  m.seed = 99;
  save_kmeans(m, dir / "k.json");
  const auto back = load_kmeans(dir / "k.json");
  CHECK(back.k == 3);
  CHECK(back.seed == 99);
  CHECK(back.centroids == m.centroids);
}

TEST_CASE("pca_2d") {
  Rng rng(7);
  SUBCASE("rank-2 data is reconstructed exactly") {
    const Matrix basis = random_matrix(2, 6, rng);
    const Matrix coef = random_matrix(50, 2, rng, 3.0);
    Matrix x = coef * basis;
    x.rowwise() += random_matrix(1, 6, rng).row(0);
    const Pca2d p = pca_2d(x);
    const Matrix recon = (p.projections * p.components).rowwise() + p.mean.transpose();
    CHECK((recon - x).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(p.variances[0] >= p.variances[1]);
    CHECK(p.projections.rows() == 50);
    for (int c = 0; c < 2; ++c) {
      Eigen::Index arg;
      p.components.row(c).cwiseAbs().maxCoeff(&arg);
      CHECK(p.components(c, arg) > 0.0);
      CHECK(p.components.row(c).norm() == doctest::Approx(1.0));
    }
  }
  SUBCASE("rank-0 input is rejected") {
    const Matrix same = Matrix::Ones(5, 3);
    CHECK_THROWS(pca_2d(same));
  }
  SUBCASE("csv export") {
    const auto dir = testing::scratch_dir("pca");
    const Matrix x = random_matrix(12, 4, rng);
    std::vector<int> labels(12);
    for (int i = 0; i < 12; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    export_pca_2d(x, labels, dir / "f.csv");
    std::ifstream in(dir / "f.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "pc1,pc2,label");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 12);
    CHECK_THROWS_AS(export_pca_2d(x, std::vector<int>(3, 0), dir / "g.csv"), ShapeError);
  }
}
