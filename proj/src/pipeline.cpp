#include "qc4qa/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "qc4qa/error.hpp"
#include "qc4qa/qc.hpp"

namespace qc4qa {
namespace fs = std::filesystem;
namespace {

fs::path data_file(const RunConfig& c, const std::string& name) { return c.data_dir() / (name + ".jsonl"); }
fs::path classified_file(const RunConfig& c, const std::string& name) {
  return c.data_dir() / "classified" / (name + ".jsonl");
}
fs::path checkpoint_file(const RunConfig& c, const std::string& name) {
  return c.checkpoint_dir() / (name + ".ckpt");
}

void require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw IoError("missing '" + p.string() + "' (" + hint + ")");
}

Vocabulary run_vocab(const RunConfig& c) {
  const fs::path p = c.data_dir() / "vocab.txt";
  require(p, "run gen-data first");
  return load_vocab(p);
}

Corpus load_corpus(const fs::path& p, Domain domain, const Vocabulary& vocab, const std::string& hint) {
  require(p, hint);
  Corpus corpus = load_jsonl(p, domain, vocab, false);
  corpus.validate();
  return corpus;
}

SpanModel load_model(const RunConfig& c, const std::string& name, const Vocabulary& vocab) {
  const fs::path p = checkpoint_file(c, name);
  require(p, name == "pretrained" ? "run pretrain first" : "run adapt first");
  return load_checkpoint(p, ModelShape{static_cast<int>(vocab.size()), c.model.dim, c.model.hidden}).model;
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

nlohmann::ordered_json eval_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["em"] = r.em;
  j["f1"] = r.f1;
  j["n"] = r.n;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [cls, s] : r.per_class) per[cls.to_string()] = {{"em", s.em}, {"f1", s.f1}, {"n", s.n}};
  j["per_class"] = per;
  return j;
}

void print_histogram(std::ostream& log, std::string_view label, const std::map<QuestionClass, double>& h) {
  log << label << ":";
  char buf[64];
  for (const auto& [cls, p] : h) {
    std::snprintf(buf, sizeof buf, " %s=%.3f", cls.to_string().c_str(), p);
    log << buf;
  }
  log << '\n';
}

SyntheticSpec seeded(SyntheticSpec spec, std::uint64_t seed) {
  spec.seed = seed;
  return spec;
}

Matrix pooled_features(const SpanModel& model, const Corpus& corpus, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), model.shape().dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = forward(model, corpus.samples[rows[i]]).features.pooled.transpose();
  }
  return out;
}

std::vector<std::size_t> all_rows(const Corpus& corpus) {
  std::vector<std::size_t> rows(corpus.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

void apply_kind_prior(SpanModel& model, const Vocabulary& vocab, double noise, Rng& rng) {
  Matrix& e = model.params().embedding;
  if (static_cast<std::size_t>(e.rows()) != vocab.size()) throw ShapeError("embedding rows do not match vocabulary");
  std::map<std::string, Vector, std::less<>> prototypes;
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    const std::string kind(answer_token_kind(vocab.token(static_cast<int>(t))));
    auto it = prototypes.find(kind);
    if (it == prototypes.end()) {
      Vector p(e.cols());
      for (Eigen::Index j = 0; j < p.size(); ++j) p[j] = 0.5 * rng.normal();
      it = prototypes.emplace(kind, std::move(p)).first;
    }
    for (Eigen::Index j = 0; j < e.cols(); ++j) e(static_cast<Eigen::Index>(t), j) = it->second[j] + noise * rng.normal();
  }
}

GenDataSummary cmd_gen_data(const RunConfig& c, std::ostream& log) {
  const SyntheticSpec src = seeded(c.data.source, stage_seed(c.seed, "data/source"));
  const SyntheticSpec tgt = seeded(c.data.target, stage_seed(c.seed, "data/target"));
  const SyntheticSplits splits = generate_synthetic(src, tgt, c.data.dev_samples);
  const Corpus qc_train =
      generate_question_bank(src, tgt, c.data.qc_train_questions, c.data.qc_cloze_fraction, stage_seed(c.seed, "data/qc_train"));
  const Corpus qc_test =
      generate_question_bank(src, tgt, c.data.qc_test_questions, c.data.qc_cloze_fraction, stage_seed(c.seed, "data/qc_test"));

  fs::create_directories(c.data_dir());
  save_vocab(splits.source.vocab, c.data_dir() / "vocab.txt");
  save_jsonl(splits.source, data_file(c, "source"));
  save_jsonl(splits.target_train, data_file(c, "target_train"));
  save_jsonl(splits.target_dev, data_file(c, "target_dev"));
  save_jsonl(splits.target_train_labels, data_file(c, "target_train_labels"));
  save_jsonl(qc_train, data_file(c, "qc_train"));
  save_jsonl(qc_test, data_file(c, "qc_test"));

  GenDataSummary s{class_histogram(splits.source), class_histogram(splits.target_train)};
  log << "wrote " << splits.source.size() << " source, " << splits.target_train.size() << " target train, "
      << splits.target_dev.size() << " target dev samples to " << c.data_dir().string() << '\n';
  print_histogram(log, "source classes", s.source_histogram);
  print_histogram(log, "target classes", s.target_histogram);
  return s;
}

PretrainSummary cmd_pretrain(const RunConfig& c, std::ostream& log) {
  const Vocabulary vocab = run_vocab(c);
  const Corpus source = load_corpus(data_file(c, "source"), Domain::Source, vocab, "run gen-data first");
  Rng init(stage_seed(c.seed, "model/init"));
  SpanModel model(ModelShape{static_cast<int>(vocab.size()), c.model.dim, c.model.hidden}, init);
  if (c.model.prior_noise >= 0.0) apply_kind_prior(model, vocab, c.model.prior_noise, init);
  PretrainConfig pc = c.pretrain;
  pc.seed = stage_seed(c.seed, "pretrain");
  const PretrainResult r = pretrain(std::move(model), source, pc);

  fs::create_directories(c.checkpoint_dir());
  fs::create_directories(c.report_dir());
  save_checkpoint(checkpoint_file(c, "pretrained"), r.model, &r.optimizer, init.state());
  PretrainSummary s{r.dev, r.batch_losses.empty() ? 0.0 : r.batch_losses.back()};
  nlohmann::ordered_json j;
  j["train_size"] = r.train_size;
  j["dev_size"] = r.dev_size;
  j["steps"] = r.batch_losses.size();
  j["final_loss"] = s.final_loss;
  j["source_dev"] = eval_json(r.dev);
  write_json(c.report_dir() / "pretrain.json", j);

  char buf[160];
  std::snprintf(buf, sizeof buf, "pretrained on %zu source samples (%zu steps); source dev EM %.2f F1 %.2f\n",
                r.train_size, r.batch_losses.size(), 100.0 * r.dev.em, 100.0 * r.dev.f1);
  log << buf;
  return s;
}

TrainQcSummary cmd_train_qc(const RunConfig& c, std::ostream& log) {
  const Vocabulary vocab = run_vocab(c);
  const Corpus train = load_corpus(data_file(c, "qc_train"), Domain::Source, vocab, "run gen-data first");
  const Corpus test = load_corpus(data_file(c, "qc_test"), Domain::Source, vocab, "run gen-data first");
  QcMlpConfig mc = c.qc.mlp;
  mc.seed = stage_seed(c.seed, "qc");

  const auto t0 = std::chrono::steady_clock::now();
  const QcTrainResult r = train_qc_mlp(labeled_questions(train), static_cast<int>(vocab.size()), mc);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto test_q = labeled_questions(test);
  TrainQcSummary s{qc_accuracy(r.model, test_q), seconds, r.best_epoch};

  fs::create_directories(c.checkpoint_dir());
  fs::create_directories(c.report_dir());
  save_qc_mlp(r.model, c.checkpoint_dir() / "qc_mlp.json");
  nlohmann::ordered_json j;
  j["best_epoch"] = r.best_epoch;
  j["val_accuracy"] = r.val_accuracy;
  j["test_accuracy"] = s.test_accuracy;
  write_json(c.report_dir() / "qc.json", j);

  char buf[128];
  std::snprintf(buf, sizeof buf, "question classifier: held-out accuracy %.2f%% (best epoch %d, %.2fs)\n",
                100.0 * s.test_accuracy, r.best_epoch, seconds);
  log << buf;
  return s;
}

ClassifySummary cmd_classify(const RunConfig& c, QcMode mode, std::ostream& log) {
  const Vocabulary vocab = run_vocab(c);
  const std::vector<std::pair<std::string, Domain>> names = {
      {"source", Domain::Source}, {"target_train", Domain::Target}, {"target_dev", Domain::Target}};
  std::vector<Corpus> corpora;
  for (const auto& [name, domain] : names) {
    corpora.push_back(load_corpus(data_file(c, name), domain, vocab, "run gen-data first"));
  }

  ClassifySummary summary;
  nlohmann::ordered_json report;
  report["mode"] = mode == QcMode::Trec ? "trec" : "kmeans";
  std::vector<std::vector<QuestionClass>> predicted(corpora.size());

  if (mode == QcMode::Trec) {
    const fs::path p = c.checkpoint_dir() / "qc_mlp.json";
    require(p, "run train-qc first");
    const QcMlp qc = load_qc_mlp(p);
    if (qc.vocab_size() != static_cast<int>(vocab.size())) throw ShapeError("classifier vocabulary does not match the run");
    for (std::size_t k = 0; k < corpora.size(); ++k) {
      std::size_t agree = 0;
      for (const auto& s : corpora[k].samples) {
        predicted[k].push_back(classify(qc, s.question));
        if (s.qclass && *s.qclass == predicted[k].back()) ++agree;
      }
      const double acc = corpora[k].size() ? static_cast<double>(agree) / static_cast<double>(corpora[k].size()) : 0.0;
      summary.accuracy[names[k].first] = acc;
      report["accuracy"][names[k].first] = acc;
    }
  } else {
    const SpanModel model = load_model(c, "pretrained", vocab);
    std::vector<std::size_t> rows = all_rows(corpora[0]);
    Rng pick(stage_seed(c.seed, "kmeans/sample"));
    pick.shuffle(rows);
    rows.resize(std::min(rows.size(), static_cast<std::size_t>(c.qc.sample_cap)));
    std::sort(rows.begin(), rows.end());
    const KMeansModel km =
        kmeans_fit(pooled_features(model, corpora[0], rows), c.qc.k, stage_seed(c.seed, "kmeans"), c.qc.max_iters, c.qc.tol);
    fs::create_directories(c.checkpoint_dir());
    save_kmeans(km, c.checkpoint_dir() / "kmeans.json");
    for (std::size_t k = 0; k < corpora.size(); ++k) {
      for (const auto& s : corpora[k].samples) {
        predicted[k].push_back(QuestionClass::cluster(kmeans_assign(km, forward(model, s).features.pooled)));
      }
    }
    report["k"] = km.k;
    report["inertia_trace"] = km.inertia_trace;
  }

  fs::create_directories(c.data_dir() / "classified");
  fs::create_directories(c.report_dir());
  for (std::size_t k = 0; k < corpora.size(); ++k) {
    for (std::size_t i = 0; i < corpora[k].size(); ++i) corpora[k].samples[i].qclass = predicted[k][i];
    save_jsonl(corpora[k], classified_file(c, names[k].first));
    const auto hist = class_histogram(corpora[k]);
    print_histogram(log, names[k].first + " predicted classes", hist);
    for (const auto& [cls, p] : hist) report["histogram"][names[k].first][cls.to_string()] = p;
  }
  for (const auto& [name, acc] : summary.accuracy) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s: agreement with generator classes %.2f%%\n", name.c_str(), 100.0 * acc);
    log << buf;
  }
  write_json(c.report_dir() / "classify.json", report);
  return summary;
}

AdaptSummary cmd_adapt(const RunConfig& c, std::ostream& log) {
  const Vocabulary vocab = run_vocab(c);
  const std::string hint = "run classify first";
  const Corpus source = load_corpus(classified_file(c, "source"), Domain::Source, vocab, hint);
  const Corpus target = load_corpus(classified_file(c, "target_train"), Domain::Target, vocab, hint);
  const Corpus dev = load_corpus(data_file(c, "target_dev"), Domain::Target, vocab, "run gen-data first");
  std::optional<Corpus> labels;
  if (c.adapt.annotations_budget > 0) {
    labels = load_corpus(data_file(c, "target_train_labels"), Domain::Target, vocab, "run gen-data first");
  }
  SpanModel model = load_model(c, "pretrained", vocab);

  AdaptConfig ac = c.adapt;
  ac.seed = stage_seed(c.seed, "adapt");
  AdaptSummary s;
  s.zero_shot = evaluate(model, dev, ac.max_answer_len);
  AdaptResult r = adapt(std::move(model), source, target, dev, ac, labels ? &*labels : nullptr);

  fs::create_directories(c.checkpoint_dir());
  fs::create_directories(c.report_dir());
  save_checkpoint(checkpoint_file(c, c.run_name), r.best_model);
  write_report(r.report, c.report_dir() / (c.run_name + ".jsonl"));

  char buf[200];
  std::snprintf(buf, sizeof buf, "%s: zero-shot target EM %.2f F1 %.2f -> best adapted EM %.2f F1 %.2f (%zu batches)\n",
                c.run_name.c_str(), 100.0 * s.zero_shot.em, 100.0 * s.zero_shot.f1, 100.0 * r.report.best_em,
                100.0 * r.report.best_f1, r.report.batches);
  log << buf;
  s.report = std::move(r.report);
  return s;
}

EvalSummary cmd_eval(const RunConfig& c, std::ostream& log) {
  const Vocabulary vocab = run_vocab(c);
  const Corpus dev = load_corpus(data_file(c, "target_dev"), Domain::Target, vocab, "run gen-data first");
  EvalSummary s;
  s.rows.emplace_back("zero-shot", evaluate(load_model(c, "pretrained", vocab), dev, c.adapt.max_answer_len));
  if (fs::exists(checkpoint_file(c, c.run_name))) {
    s.rows.emplace_back(c.run_name, evaluate(load_model(c, c.run_name, vocab), dev, c.adapt.max_answer_len));
  }
  fs::create_directories(c.report_dir());
  nlohmann::ordered_json j;
  for (const auto& [name, r] : s.rows) j[name] = eval_json(r);
  write_json(c.report_dir() / ("eval_" + c.run_name + ".json"), j);
  log << render_table(s.rows);
  return s;
}

void cmd_export_features(const RunConfig& c, std::ostream& log) {
  const Vocabulary vocab = run_vocab(c);
  const std::string& name = c.export_features.corpus;
  const Corpus corpus = load_corpus(data_file(c, name), name == "source" ? Domain::Source : Domain::Target, vocab,
                                    "run gen-data first");
  const SpanModel model = load_model(c, c.export_features.checkpoint, vocab);
  const Matrix feats = pooled_features(model, corpus, all_rows(corpus));

  const fs::path km_path = c.checkpoint_dir() / "kmeans.json";
  const KMeansModel km = fs::exists(km_path) ? load_kmeans(km_path)
                                             : kmeans_fit(feats, c.qc.k, stage_seed(c.seed, "kmeans"), c.qc.max_iters, c.qc.tol);
  std::vector<int> labels;
  labels.reserve(corpus.size());
  for (Eigen::Index i = 0; i < feats.rows(); ++i) labels.push_back(kmeans_assign(km, feats.row(i).transpose()));

  fs::create_directories(c.report_dir());
  const fs::path out = c.report_dir() / "features.csv";
  export_pca_2d(feats, labels, out);
  log << "wrote " << corpus.size() << " PCA rows to " << out.string() << '\n';
}

}  // namespace qc4qa
