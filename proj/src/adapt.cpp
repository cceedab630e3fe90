#include "qc4qa/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "qc4qa/error.hpp"

namespace qc4qa {
namespace {

std::int64_t ceil_div(std::size_t a, std::size_t b) {
  return static_cast<std::int64_t>((a + b - 1) / b);
}

void check_optimizer(const AdamWConfig& c) {
  if (!(c.lr >= 0.0) || !(c.weight_decay >= 0.0) || !(c.warmup_fraction >= 0.0 && c.warmup_fraction <= 1.0) ||
      !(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0) || !(c.epsilon > 0.0)) {
    throw ValidationError("optimizer settings out of range");
  }
}

Matrix stack_rows(const std::vector<Vector>& rows, std::size_t begin, std::size_t end) {
  Matrix m(static_cast<Eigen::Index>(end - begin), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = begin; i < end; ++i) m.row(static_cast<Eigen::Index>(i - begin)) = rows[i].transpose();
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

void PretrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0) throw ValidationError("pretrain epochs and batch_size must be positive");
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) throw ValidationError("pretrain dev_fraction must lie in [0,1)");
  if (max_answer_len && *max_answer_len <= 0) throw ValidationError("max_answer_len must be positive");
  check_optimizer(optimizer);
}

PretrainResult pretrain(SpanModel model, const Corpus& source, const PretrainConfig& config) {
  config.validate();
  for (const auto& s : source.samples) {
    if (!s.answer) throw ValidationError("pretrain: source sample '" + s.id + "' is unlabeled");
  }
  Rng rng(config.seed);
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_dev = static_cast<std::size_t>(std::floor(config.dev_fraction * static_cast<double>(source.size())));
  Corpus dev;
  dev.vocab = source.vocab;
  dev.domain = source.domain;
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_dev), order.end());
  for (std::size_t i = 0; i < n_dev; ++i) dev.samples.push_back(source.samples[order[i]]);
  if (train.empty()) throw ValidationError("pretrain: no training samples after the dev split");

  const auto bs = static_cast<std::size_t>(config.batch_size);
  AdamWConfig opt = config.optimizer;
  opt.total_steps = config.epochs * ceil_div(train.size(), bs);

  PretrainResult result{std::move(model), OptimizerState{}, {}, {}, train.size(), n_dev};
  result.optimizer = OptimizerState::for_shape(result.model.shape());
  std::vector<TrainExample> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(train);
    for (std::size_t start = 0; start < train.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(train.size(), start + bs); ++i) {
        const QASample& s = source.samples[train[i]];
        batch.push_back({&s, *s.answer, 1.0});
      }
      const BackwardResult b = backward(result.model, batch);
      adamw_step(result.model, b.grads, result.optimizer, opt);
      result.batch_losses.push_back(b.nll);
    }
  }
  if (n_dev > 0) result.dev = evaluate(result.model, dev, config.max_answer_len);
  return result;
}

// ---------------------------------------------------------------------------

DecodedSpan decode_span(const Vector& start_probs, const Vector& end_probs, std::optional<int> max_len) {
  if (start_probs.size() == 0 || start_probs.size() != end_probs.size()) {
    throw ShapeError("decode_span: start and end distributions must be nonempty and equally long");
  }
  const auto n = static_cast<int>(start_probs.size());
  DecodedSpan best{{0, 0}, -1.0};
  for (int s = 0; s < n; ++s) {
    const int last = max_len ? std::min(n - 1, s + *max_len - 1) : n - 1;
    for (int e = s; e <= last; ++e) {
      const double p = start_probs(s) * end_probs(e);
      if (p > best.confidence) best = {{s, e}, p};
    }
  }
  return best;
}

PseudoLabelSet pseudo_label(const SpanModel& model, const Corpus& target, double lambda_con,
                            std::optional<int> max_answer_len, int epoch) {
  if (!(lambda_con >= 0.0 && lambda_con <= 1.0)) throw ValidationError("lambda_con must lie in [0,1]");
  std::vector<PseudoLabel> all;
  all.reserve(target.size());
  for (const auto& s : target.samples) {
    const ForwardResult f = forward(model, s);
    const DecodedSpan d = decode_span(f.start_probs, f.end_probs, max_answer_len);
    all.push_back({s.id, d.span, d.confidence});
  }
  std::sort(all.begin(), all.end(), [](const PseudoLabel& a, const PseudoLabel& b) { return a.id < b.id; });
  PseudoLabelSet out;
  out.epoch = epoch;
  for (auto& p : all) {
    if (p.confidence >= lambda_con) {
      out.labels.push_back(std::move(p));
    } else {
      ++out.filtered;
    }
  }
  out.retained = out.labels.size();
  return out;
}

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(const Corpus& source, const std::vector<QASample>& pool, Sampling mode)
    : source_(source), pool_(pool), mode_(mode) {
  if (source.samples.empty()) throw ValidationError("sample_batch: source corpus is empty");
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& s = source.samples[i];
    if (!s.qclass) throw ValidationError("sample_batch: source sample '" + s.id + "' has no question class");
    source_by_class_[*s.qclass].push_back(i);
  }
  for (const auto& t : pool) {
    if (!t.qclass) throw ValidationError("sample_batch: target sample '" + t.id + "' has no question class");
    if (mode == Sampling::DistributionAware && !source_by_class_.contains(*t.qclass)) {
      throw ValidationError("sample_batch: question class " + t.qclass->to_string() +
                            " appears in the target pool but not in the source corpus");
    }
  }
}

BatchDraw BatchSampler::draw(int batch_target, Rng& rng) const {
  if (batch_target <= 0) throw ValidationError("sample_batch: batch size must be positive");
  if (pool_.empty()) throw ValidationError("sample_batch: target pool is empty");
  const auto b = static_cast<std::size_t>(batch_target);
  BatchDraw d;

  auto draw_indices = [&rng](std::size_t pool_size, std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    if (pool_size >= count) {
      // Partial Fisher-Yates over a virtual identity permutation.
      std::unordered_map<std::size_t, std::size_t> swapped;
      auto at = [&swapped](std::size_t i) {
        auto it = swapped.find(i);
        return it == swapped.end() ? i : it->second;
      };
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.uniform_index(pool_size - i);
        const std::size_t vi = at(i), vj = at(j);
        swapped[i] = vj;
        swapped[j] = vi;
        out.push_back(vj);
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) out.push_back(rng.uniform_index(pool_size));
    }
    return out;
  };

  d.target = draw_indices(pool_.size(), b);
  if (mode_ == Sampling::Random) {
    d.source = draw_indices(source_.size(), b);
    return d;
  }
  // Group target draws by class, draw that many source samples per class, and
  // lay them out aligned with the target half.
  std::map<QuestionClass, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < b; ++i) positions[*pool_[d.target[i]].qclass].push_back(i);
  d.source.assign(b, 0);
  for (const auto& [cls, pos] : positions) {
    const auto& members = source_by_class_.at(cls);
    const auto picks = draw_indices(members.size(), pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) d.source[pos[i]] = members[picks[i]];
  }
  return d;
}

BatchDraw sample_batch(const Corpus& source, const std::vector<QASample>& pool, Sampling mode, int batch_target,
                       Rng& rng) {
  return BatchSampler(source, pool, mode).draw(batch_target, rng);
}

bool class_multisets_equal(const Corpus& source, const std::vector<QASample>& pool, const BatchDraw& draw) {
  if (draw.source.size() != draw.target.size()) return false;
  std::map<QuestionClass, long> balance;
  for (auto i : draw.target) ++balance[*pool.at(i).qclass];
  for (auto i : draw.source) --balance[*source.samples.at(i).qclass];
  return std::all_of(balance.begin(), balance.end(), [](const auto& kv) { return kv.second == 0; });
}

// ---------------------------------------------------------------------------

void AdaptConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be nonnegative");
  if (!(lambda_con >= 0.0 && lambda_con <= 1.0)) throw ValidationError("lambda_con must lie in [0,1]");
  if (batch_target < 1) throw ValidationError("batch_target must be at least 1");
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (eval_every < 1) throw ValidationError("eval_every must be at least 1");
  if (annotations_budget < 0) throw ValidationError("annotations_budget must be nonnegative");
  if (max_answer_len && *max_answer_len <= 0) throw ValidationError("max_answer_len must be positive");
  if (kernel.mode == KernelConfig::Mode::Fixed && !(kernel.gamma > 0.0)) throw ValidationError("fixed gamma must be positive");
  if (!(kernel.epsilon_floor > 0.0)) throw ValidationError("epsilon_floor must be positive");
  check_optimizer(optimizer);
}

std::string report_to_jsonl(const ExperimentReport& report) {
  std::string out;
  for (const auto& r : report.records) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["iteration"] = r.iteration;
    j["em"] = r.em;
    j["f1"] = r.f1;
    j["nll"] = r.nll;
    j["caqa_loss"] = r.caqa_loss;
    j["qc4qa_loss"] = r.qc4qa_loss;
    j["retained"] = r.retained;
    j["filtered"] = r.filtered;
    j["gamma"] = r.gamma;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << report_to_jsonl(report);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

AdaptResult adapt(SpanModel model, const Corpus& source, const Corpus& target_train, const Corpus& target_dev,
                  const AdaptConfig& config, const Corpus* target_labels) {
  config.validate();
  for (const auto& s : source.samples) {
    if (!s.answer) throw ValidationError("adapt: source sample '" + s.id + "' is unlabeled");
    if (!s.qclass) throw ValidationError("adapt: source sample '" + s.id + "' is not classified");
  }
  for (const auto& s : target_train.samples) {
    if (!s.qclass) throw ValidationError("adapt: target sample '" + s.id + "' is not classified");
  }

  // Annotated target samples keep their gold span for the whole run.
  std::unordered_map<std::string, Span> annotated;
  if (config.annotations_budget > 0) {
    if (!target_labels) throw ValidationError("adapt: annotations_budget needs gold target labels");
    std::unordered_map<std::string, const QASample*> gold;
    for (const auto& s : target_labels->samples) gold.emplace(s.id, &s);
    std::vector<std::size_t> order(target_train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng pick(stage_seed(config.seed, "annotations"));
    pick.shuffle(order);
    const auto budget = std::min<std::size_t>(order.size(), static_cast<std::size_t>(config.annotations_budget));
    for (std::size_t i = 0; i < budget; ++i) {
      const auto& id = target_train.samples[order[i]].id;
      auto it = gold.find(id);
      if (it == gold.end() || !it->second->answer) throw ValidationError("adapt: no gold label for target sample '" + id + "'");
      annotated.emplace(id, *it->second->answer);
    }
  }
  std::unordered_map<std::string, std::size_t> target_index;
  for (std::size_t i = 0; i < target_train.size(); ++i) target_index.emplace(target_train.samples[i].id, i);
  Corpus unannotated;
  unannotated.vocab = target_train.vocab;
  unannotated.domain = target_train.domain;
  for (const auto& s : target_train.samples) {
    if (!annotated.contains(s.id)) unannotated.samples.push_back(s);
  }

  const auto b = static_cast<std::size_t>(config.batch_target);
  AdamWConfig opt = config.optimizer;
  opt.total_steps = config.epochs * ceil_div(std::max<std::size_t>(1, target_train.size()), b);
  OptimizerState state = OptimizerState::for_shape(model.shape());
  Rng rng(stage_seed(config.seed, "adapt"));

  AdaptResult result{model, model, {}};
  ExperimentReport& report = result.report;
  std::int64_t iteration = 0;
  std::int64_t last_record_iteration = -1;

  // Running sums since the previous validation record.
  double win_nll = 0.0, win_caqa = 0.0, win_qc = 0.0, win_gamma = 0.0;
  std::size_t win_batches = 0;
  std::size_t retained = 0, filtered = 0;

  auto validate_now = [&](int epoch) {
    const EvalResult ev = evaluate(model, target_dev, config.max_answer_len);
    ValidationRecord rec;
    rec.epoch = epoch;
    rec.iteration = iteration;
    rec.em = ev.em;
    rec.f1 = ev.f1;
    if (win_batches > 0) {
      const auto n = static_cast<double>(win_batches);
      rec.nll = win_nll / n;
      rec.caqa_loss = win_caqa / n;
      rec.qc4qa_loss = win_qc / n;
      rec.gamma = win_gamma / n;
    }
    rec.retained = retained;
    rec.filtered = filtered;
    report.records.push_back(rec);
    if (ev.f1 > report.best_f1) {
      report.best_f1 = ev.f1;
      report.best_em = ev.em;
      report.best_record = report.records.size() - 1;
      result.best_model = model;
    }
    win_nll = win_caqa = win_qc = win_gamma = 0.0;
    win_batches = 0;
    last_record_iteration = iteration;
  };

  std::vector<TrainExample> batch;
  std::vector<QuestionClass> src_classes, tgt_classes;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const PseudoLabelSet labels = pseudo_label(model, unannotated, config.lambda_con, config.max_answer_len, epoch);
    retained = labels.retained;
    filtered = labels.filtered;

    std::vector<QASample> pool;
    pool.reserve(labels.retained + annotated.size());
    for (const auto& s : target_train.samples) {
      if (auto it = annotated.find(s.id); it != annotated.end()) {
        QASample a = s;
        a.answer = it->second;
        a.pseudo = false;
        a.confidence.reset();
        pool.push_back(std::move(a));
      }
    }
    for (const auto& p : labels.labels) {
      QASample s = target_train.samples[target_index.at(p.id)];
      s.answer = p.span;
      s.pseudo = true;
      s.confidence = p.confidence;
      pool.push_back(std::move(s));
    }

    if (!pool.empty()) {
      const BatchSampler sampler(source, pool, config.sampling);
      const std::int64_t iters = ceil_div(pool.size(), b);
      for (std::int64_t it = 0; it < iters; ++it) {
        const BatchDraw draw = sampler.draw(config.batch_target, rng);
        ++report.batches;
        if (class_multisets_equal(source, pool, draw)) ++report.class_matched_batches;

        batch.clear();
        src_classes.clear();
        tgt_classes.clear();
        for (auto i : draw.source) {
          const QASample& s = source.samples[i];
          batch.push_back({&s, *s.answer, 1.0});
          src_classes.push_back(*s.qclass);
        }
        for (auto i : draw.target) {
          const QASample& s = pool[i];
          batch.push_back({&s, *s.answer, 1.0});
          tgt_classes.push_back(*s.qclass);
        }

        double discrepancy = 0.0, caqa = 0.0, qc = 0.0, gamma = 0.0;
        std::vector<Vector> aux;
        if (!config.nll_only) {
          const std::vector<Vector> feats = answer_features(model, batch);
          const std::size_t ns = draw.source.size();
          Matrix src = stack_rows(feats, 0, ns);
          Matrix tgt = stack_rows(feats, ns, feats.size());
          gamma = resolve_bandwidth(stack_rows(feats, 0, feats.size()), config.kernel);
          Matrix grad_src = Matrix::Zero(src.rows(), src.cols());
          Matrix grad_tgt = Matrix::Zero(tgt.rows(), tgt.cols());
          if (config.use_caqa) {
            const MmdGradient g = caqa_loss_grad(src, tgt, gamma);
            caqa = g.value;
            grad_src += g.grad_a;
            grad_tgt += g.grad_b;
          }
          if (config.use_qc4qa) {
            const ClassPartition part = ClassPartition::build(src, src_classes, tgt, tgt_classes);
            const MmdGradient g = qc4qa_loss_grad(part, gamma);
            qc = g.value;
            grad_src += g.grad_a;
            grad_tgt += g.grad_b;
          }
          discrepancy = caqa + qc;
          if (config.lambda != 0.0) {
            aux.reserve(feats.size());
            for (Eigen::Index r = 0; r < grad_src.rows(); ++r) aux.push_back(config.lambda * grad_src.row(r).transpose());
            for (Eigen::Index r = 0; r < grad_tgt.rows(); ++r) aux.push_back(config.lambda * grad_tgt.row(r).transpose());
          }
        }

        BackwardResult bw = aux.empty() ? backward(model, batch)
                                        : backward(model, batch, std::span<const Vector>(aux));
        const double total = config.nll_only ? bw.nll : bw.nll + config.lambda * discrepancy;
        if (!std::isfinite(total)) {
          throw NumericError("adapt: non-finite total loss at batch " + std::to_string(iteration));
        }
        adamw_step(model, bw.grads, state, opt);
        report.batch_losses.push_back(total);
        ++iteration;

        win_nll += bw.nll;
        win_caqa += caqa;
        win_qc += qc;
        win_gamma += gamma;
        ++win_batches;
        if (iteration % config.eval_every == 0) validate_now(epoch);
      }
    }
    if (last_record_iteration != iteration) validate_now(epoch);
  }
  result.final_model = std::move(model);
  return result;
}

}  // namespace qc4qa
