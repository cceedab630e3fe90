// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// The end-to-end criteria run the canonical pipeline (seed 42) in a scratch workdir.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>

#include "helpers.hpp"
#include "qc4qa/discrepancy.hpp"
#include "qc4qa/pipeline.hpp"
#include "qc4qa/qc.hpp"

using namespace qc4qa;
using testing::random_matrix;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------

Outcome mmd_oracle() {
  const auto t0 = Clock::now();
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(20));
    const int m = 1 + static_cast<int>(rng.uniform_index(20));
    const int d = 1 + static_cast<int>(rng.uniform_index(8));
    const Matrix a = random_matrix(n, d, rng), b = random_matrix(m, d, rng, 1.5);
    const double gamma = 0.1 + 10.0 * rng.uniform01();
    worst = std::max(worst, std::abs(mmd_sq(a, b, gamma) - testing::naive_mmd_sq(a, b, gamma)));
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-10 && s < 10.0, fmt("max |diff| %.2e over 1000 instances, %.2fs", worst, s)};
}

Outcome mmd_analytic() {
  Matrix zero = Matrix::Zero(1, 1), one = Matrix::Ones(1, 1);
  const double single = std::abs(mmd_sq(zero, one, 1.0) - (2.0 - 2.0 * std::exp(-1.0)));
  Rng rng(2);
  double self = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_matrix(1 + static_cast<int>(rng.uniform_index(20)), 1 + static_cast<int>(rng.uniform_index(8)), rng);
    self = std::max(self, std::abs(mmd_sq(a, a, 0.5 + rng.uniform01())));
  }
  return {single <= 1e-12 && self <= 1e-12, fmt("singleton error %.2e, max mmd(A,A) %.2e", single, self)};
}

double model_fd_error(std::uint64_t seed, bool with_aux) {
  Rng rng(seed);
  const int vocab = 30, ctx = 8;
  SpanModel model(ModelShape{vocab, 6, 5}, rng);
  std::vector<QASample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back(testing::toy_sample("g" + std::to_string(i), vocab, ctx, rng));
  std::vector<TrainExample> batch;
  for (const auto& s : samples) batch.push_back({&s, *s.answer, 0.5 + rng.uniform01()});

  const double lambda = 0.7, gamma = 2.0;
  std::vector<QuestionClass> sc, tc;
  for (int i = 0; i < 3; ++i) {
    sc.push_back(*samples[static_cast<std::size_t>(i)].qclass);
    tc.push_back(*samples[static_cast<std::size_t>(i + 3)].qclass);
  }
  tc[0] = sc[0];  // at least one class shared across the halves
  auto disc = [&](const std::vector<Vector>& f, std::vector<Vector>* aux) {
    Matrix src(3, f[0].size()), tgt(3, f[0].size());
    for (int i = 0; i < 3; ++i) {
      src.row(i) = f[static_cast<std::size_t>(i)].transpose();
      tgt.row(i) = f[static_cast<std::size_t>(i + 3)].transpose();
    }
    const auto g1 = caqa_loss_grad(src, tgt, gamma);
    const auto g2 = qc4qa_loss_grad(ClassPartition::build(src, sc, tgt, tc), gamma);
    if (aux) {
      aux->assign(6, Vector());
      for (int i = 0; i < 3; ++i) {
        (*aux)[static_cast<std::size_t>(i)] = lambda * (g1.grad_a.row(i) + g2.grad_a.row(i)).transpose();
        (*aux)[static_cast<std::size_t>(i + 3)] = lambda * (g1.grad_b.row(i) + g2.grad_b.row(i)).transpose();
      }
    }
    return lambda * (g1.value + g2.value);
  };

  std::vector<Vector> aux;
  std::optional<std::span<const Vector>> aux_span;
  if (with_aux) {
    disc(answer_features(model, batch), &aux);
    aux_span = std::span<const Vector>(aux);
  }
  const BackwardResult br = backward(model, batch, aux_span);
  const auto analytic = br.grads.tensors();  // views into br
  auto params = model.params().tensors();
  const auto objective = [&] {
    double v = objective_value(model, batch);
    if (with_aux) v += disc(answer_features(model, batch), nullptr);
    return v;
  };
  double worst = 0.0;
  for (int t = 0; t < kNumTensors; ++t)
    for (std::size_t i = 0; i < params[t].values.size(); ++i)
      worst = std::max(worst, testing::rel_error(analytic[t].values[i], testing::central_diff(&params[t].values[i], 1e-5, objective)));
  return worst;
}

Outcome gradient_suites() {
  const auto t0 = Clock::now();
  Rng rng(3);
  double mmd_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = random_matrix(2 + static_cast<int>(rng.uniform_index(5)), 3, rng);
    Matrix b = random_matrix(2 + static_cast<int>(rng.uniform_index(5)), 3, rng);
    const double gamma = 1.0 + 3.0 * rng.uniform01();
    const auto g = mmd_sq_grad(a, b, gamma);
    for (Matrix* m : {&a, &b}) {
      const Matrix& gm = m == &a ? g.grad_a : g.grad_b;
      for (Eigen::Index i = 0; i < m->size(); ++i) {
        const double num = testing::central_diff(m->data() + i, 1e-6, [&] { return testing::naive_mmd_sq(a, b, gamma); });
        mmd_worst = std::max(mmd_worst, testing::rel_error(gm.data()[i], num));
      }
    }
  }
  double model_worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    model_worst = std::max(model_worst, model_fd_error(seed, false));
    model_worst = std::max(model_worst, model_fd_error(seed + 10, true));
  }
  const double s = seconds_since(t0);
  return {mmd_worst <= 1e-5 && model_worst <= 1e-4 && s < 60.0,
          fmt("mmd grad rel err %.2e, model rel err %.2e, %.2fs", mmd_worst, model_worst, s)};
}

Outcome sampler(const RunConfig& cfg) {
  const Vocabulary vocab = load_vocab(cfg.data_dir() / "vocab.txt");
  const Corpus source = load_jsonl(cfg.data_dir() / "classified" / "source.jsonl", Domain::Source, vocab, false);
  const Corpus target = load_jsonl(cfg.data_dir() / "classified" / "target_train.jsonl", Domain::Target, vocab, false);
  const std::vector<QASample>& pool = target.samples;
  const BatchSampler aware(source, pool, Sampling::DistributionAware);
  const BatchSampler random(source, pool, Sampling::Random);
  Rng rng(cfg.seed);
  int matched = 0, random_violations = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) matched += class_multisets_equal(source, pool, aware.draw(cfg.adapt.batch_target, rng)) ? 1 : 0;
  Rng rng2(cfg.seed);
  for (int i = 0; i < n; ++i) random_violations += class_multisets_equal(source, pool, random.draw(cfg.adapt.batch_target, rng2)) ? 0 : 1;
  return {matched == n && random_violations > 0,
          fmt("%.0f/%.0f matched; random mode violated on %.0f batches", matched, n, random_violations)};
}

Outcome pseudo_label_filter(const RunConfig& cfg) {
  const Vocabulary vocab = load_vocab(cfg.data_dir() / "vocab.txt");
  const Corpus target = load_jsonl(cfg.data_dir() / "target_train.jsonl", Domain::Target, vocab, false);
  const SpanModel model = load_checkpoint(cfg.checkpoint_dir() / "pretrained.ckpt").model;
  bool ok = true;
  std::size_t prev = target.size() + 1;
  std::string counts;
  for (double lc : {0.2, 0.4, 0.6, 0.8}) {
    const auto set = pseudo_label(model, target, lc, cfg.adapt.max_answer_len);
    for (const auto& l : set.labels) ok = ok && l.confidence >= lc;
    ok = ok && set.retained <= prev && set.retained == set.labels.size();
    prev = set.retained;
    counts += (counts.empty() ? "" : " ") + std::to_string(set.retained);
  }
  return {ok, "retained " + counts + " of " + std::to_string(target.size())};
}

Outcome kmeans_properties() {
  Rng rng(4);
  bool monotone = true, deterministic = true;
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix x = random_matrix(30 + static_cast<int>(rng.uniform_index(100)), 4, rng);
    const int k = 2 + static_cast<int>(rng.uniform_index(6));
    const auto m = kmeans_fit(x, k, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 1; i < m.inertia_trace.size(); ++i) monotone = monotone && m.inertia_trace[i] <= m.inertia_trace[i - 1];
    const auto again = kmeans_fit(x, k, static_cast<std::uint64_t>(trial));
    deterministic = deterministic && again.centroids == m.centroids && again.inertia_trace == m.inertia_trace;
  }
  const int per = 200, d = 3;
  Matrix x(2 * per, d);
  for (int i = 0; i < 2 * per; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = (i < per ? 0.0 : 5.0) + 0.3 * rng.normal();
  const auto m = kmeans_fit(x, 2, 11);
  const int first = m.centroids(0, 0) < 2.5 ? 0 : 1;
  const double e0 = m.centroids.row(first).norm();
  const double e1 = (m.centroids.row(1 - first).array() - 5.0).matrix().norm();
  return {monotone && deterministic && std::max(e0, e1) <= 0.1,
          fmt("monotone %.0f, deterministic %.0f, blob centroid errors %.3f %.3f", monotone, deterministic, e0, e1)};
}

Outcome metric_suite() {
  const std::vector<int> ctx = {0, 1, 2, 3};
  bool ok = score_sample({1, 2}, {1, 2}, ctx).em == 1 && score_sample({1, 2}, {1, 2}, ctx).f1 == 1.0;
  ok = ok && score_sample({0, 0}, {2, 3}, ctx).em == 0 && score_sample({0, 0}, {2, 3}, ctx).f1 == 0.0;
  const auto half = score_sample({1, 2}, {0, 1}, ctx);
  ok = ok && half.em == 0 && std::abs(half.f1 - 0.5) <= 1e-12;
  Rng rng(5);
  int exact = 0, bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(6));
    std::vector<int> c(static_cast<std::size_t>(n));
    for (int& t : c) t = static_cast<int>(rng.uniform_index(3));
    auto span = [&] {
      const int a = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
      const int b = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
      return Span{std::min(a, b), std::max(a, b)};
    };
    const auto s = score_sample(span(), span(), c);
    if (s.em == 1) {
      ++exact;
      if (s.f1 != 1.0) ++bad;
    }
  }
  return {ok && bad == 0 && exact > 0, fmt("examples ok %.0f; %.0f exact pairs, %.0f with f1 != 1", ok, exact, bad)};
}

// ---------------------------------------------------------------------------

struct Pipeline {
  RunConfig cfg;
  TrainQcSummary qc;
  AdaptSummary full, ablation;
  double seconds = 0.0;
};

Pipeline run_canonical(const fs::path& workdir) {
  Pipeline p;
  p.cfg = load_config(std::nullopt);
  p.cfg.workdir = workdir;
  std::ostringstream log;
  const auto t0 = Clock::now();
  cmd_gen_data(p.cfg, log);
  cmd_pretrain(p.cfg, log);
  p.qc = cmd_train_qc(p.cfg, log);
  cmd_classify(p.cfg, QcMode::Trec, log);
  RunConfig full = p.cfg;
  full.run_name = "full";
  p.full = cmd_adapt(full, log);
  RunConfig zero = p.cfg;
  zero.run_name = "lambda0";
  zero.adapt.lambda = 0.0;
  p.ablation = cmd_adapt(zero, log);
  p.seconds = seconds_since(t0);
  return p;
}

Outcome qc_accuracy_check(const Pipeline& p) {
  return {p.qc.test_accuracy >= 0.95 && p.qc.seconds < 60.0,
          fmt("held-out accuracy %.2f%%, trained in %.2fs", 100 * p.qc.test_accuracy, p.qc.seconds)};
}

Outcome end_to_end(const Pipeline& p) {
  const double zero_em = 100 * p.full.zero_shot.em, best_em = 100 * p.full.report.best_em;
  const double full_f1 = 100 * p.full.report.best_f1, abl_f1 = 100 * p.ablation.report.best_f1;
  const bool ok = best_em >= zero_em + 5.0 && full_f1 > abl_f1 && p.seconds < 600.0;
  return {ok, fmt("zero-shot EM %.2f -> adapted EM %.2f; F1 full %.2f vs lambda=0 %.2f", zero_em, best_em, full_f1, abl_f1) +
                  fmt(" (%.1fs)", p.seconds)};
}

Outcome collapse(const Pipeline& p) {
  std::ostringstream log;
  RunConfig zero = p.cfg;
  zero.adapt.epochs = 1;
  zero.adapt.lambda = 0.0;
  zero.run_name = "collapse_lambda0";
  RunConfig nll = zero;
  nll.adapt.lambda = p.cfg.adapt.lambda;
  nll.adapt.nll_only = true;
  nll.run_name = "collapse_nll";
  const auto a = cmd_adapt(zero, log).report.batch_losses;
  const auto b = cmd_adapt(nll, log).report.batch_losses;
  std::size_t same = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    same += std::memcmp(&a[i], &b[i], sizeof(double)) == 0 ? 1 : 0;
  return {!a.empty() && a.size() == b.size() && same == a.size(),
          fmt("%.0f of %.0f batch losses bit-identical", static_cast<double>(same), static_cast<double>(a.size()))};
}

Outcome determinism(const Pipeline& p) {
  std::ostringstream log;
  RunConfig a = p.cfg;
  a.run_name = "repeat_a";
  RunConfig b = p.cfg;
  b.run_name = "repeat_b";
  cmd_adapt(a, log);
  cmd_adapt(b, log);
  const std::string ra = testing::slurp(a.report_dir() / "repeat_a.jsonl");
  const std::string rb = testing::slurp(b.report_dir() / "repeat_b.jsonl");
  const bool same_ckpt = testing::slurp(a.checkpoint_dir() / "repeat_a.ckpt") == testing::slurp(b.checkpoint_dir() / "repeat_b.ckpt");
  return {!ra.empty() && ra == rb && same_ckpt,
          "reports " + std::string(ra == rb ? "identical" : "differ") + " (" + std::to_string(ra.size()) + " bytes), checkpoints " +
              (same_ckpt ? "identical" : "differ")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
  };

  report("MMD oracle equivalence", mmd_oracle);
  report("MMD analytic values", mmd_analytic);
  report("Gradient suites", gradient_suites);
  report("EM/F1 metric suite", metric_suite);
  report("KMeans properties", kmeans_properties);

  const fs::path workdir = testing::scratch_dir("acceptance");
  std::optional<Pipeline> p;
  std::string pipeline_error;
  try {
    p = run_canonical(workdir);
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto needs_pipeline = [&](const char* name, const std::function<Outcome(const Pipeline&)>& f) {
    if (!p) {
      ++failures;
      std::cout << "[FAIL] " << name << ": canonical pipeline failed: " << pipeline_error << std::endl;
      return;
    }
    report(name, [&] { return f(*p); });
  };
  needs_pipeline("Supervised QC accuracy", qc_accuracy_check);
  needs_pipeline("End-to-end adaptation gain", end_to_end);
  needs_pipeline("Lambda = 0 collapse", collapse);
  needs_pipeline("Sampler invariant", [](const Pipeline& q) { return sampler(q.cfg); });
  needs_pipeline("Pseudo-label filter", [](const Pipeline& q) { return pseudo_label_filter(q.cfg); });
  needs_pipeline("Determinism", determinism);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
