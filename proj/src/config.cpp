#include "qc4qa/config.hpp"

#include <fstream>
#include <set>

#include "qc4qa/error.hpp"

namespace qc4qa {
namespace {

using json = nlohmann::json;

// Reads keys from one JSON object and rejects any key that was not consumed.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ValidationError("config: '" + name(key) + "': " + e.what());
    }
  }

  void read_optional_int(const char* key, std::optional<int>& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    if (!it->is_number_integer()) throw ValidationError("config: '" + name(key) + "' must be an integer or null");
    out = it->get<int>();
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ValidationError("config: unknown key '" + name(it.key().c_str()) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_spec(const json& j, const std::string& path, SyntheticSpec& spec) {
  Section s(j, path);
  s.read("vocab_size", spec.vocab_size);
  s.read("n_samples", spec.n_samples);
  std::vector<double> mixture(spec.class_mixture.begin(), spec.class_mixture.end());
  s.read("class_mixture", mixture);
  if (mixture.size() != kNumCoarseClasses) {
    throw ValidationError("config: '" + path + ".class_mixture' must have 6 entries (ABBR DESC ENTY HUM LOC NUM)");
  }
  std::copy(mixture.begin(), mixture.end(), spec.class_mixture.begin());
  s.read("cloze_fraction", spec.cloze_fraction);
  s.read("vocab_drift", spec.vocab_drift);
  s.read("context_len", spec.context_len);
  s.finish();
}

void read_optimizer(Section& s, AdamWConfig& opt) {
  s.read("lr", opt.lr);
  s.read("warmup_fraction", opt.warmup_fraction);
  s.read("weight_decay", opt.weight_decay);
}

nlohmann::ordered_json spec_json(const SyntheticSpec& spec) {
  return {{"vocab_size", spec.vocab_size},       {"n_samples", spec.n_samples},
          {"class_mixture", spec.class_mixture}, {"cloze_fraction", spec.cloze_fraction},
          {"vocab_drift", spec.vocab_drift},     {"context_len", spec.context_len}};
}

json optional_int_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + o + "' must look like key.path=value");
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ValidationError("override '" + o + "' has an empty key segment");
      if (!node->is_object()) {
        if (!node->is_null()) throw ValidationError("override '" + o + "' descends into a non-object");
        *node = json::object();
      }
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.read("seed", c.seed);
  std::string workdir = c.workdir.string();
  root.read("workdir", workdir);
  c.workdir = workdir;
  root.read("run_name", c.run_name);

  if (const json* d = root.child("data")) {
    Section s(*d, "data");
    if (const json* src = s.child("source")) read_spec(*src, "data.source", c.data.source);
    if (const json* tgt = s.child("target")) read_spec(*tgt, "data.target", c.data.target);
    s.read("dev_samples", c.data.dev_samples);
    s.read("qc_train_questions", c.data.qc_train_questions);
    s.read("qc_test_questions", c.data.qc_test_questions);
    s.read("qc_cloze_fraction", c.data.qc_cloze_fraction);
    s.finish();
  }
  if (const json* m = root.child("model")) {
    Section s(*m, "model");
    s.read("dim", c.model.dim);
    s.read("hidden", c.model.hidden);
    s.read("prior_noise", c.model.prior_noise);
    s.finish();
  }
  if (const json* p = root.child("pretrain")) {
    Section s(*p, "pretrain");
    s.read("epochs", c.pretrain.epochs);
    s.read("batch_size", c.pretrain.batch_size);
    s.read("dev_fraction", c.pretrain.dev_fraction);
    s.read_optional_int("max_answer_len", c.pretrain.max_answer_len);
    read_optimizer(s, c.pretrain.optimizer);
    s.finish();
  }
  if (const json* q = root.child("qc")) {
    Section s(*q, "qc");
    std::string mode = c.qc.mode == QcMode::Trec ? "trec" : "kmeans";
    s.read("mode", mode);
    if (mode == "trec") {
      c.qc.mode = QcMode::Trec;
    } else if (mode == "kmeans") {
      c.qc.mode = QcMode::KMeans;
    } else {
      throw ValidationError("config: 'qc.mode' must be \"trec\" or \"kmeans\"");
    }
    s.read("k", c.qc.k);
    s.read("sample_cap", c.qc.sample_cap);
    s.read("max_iters", c.qc.max_iters);
    s.read("tol", c.qc.tol);
    s.read("embed_dim", c.qc.mlp.embed_dim);
    s.read("hidden", c.qc.mlp.hidden);
    s.read("epochs", c.qc.mlp.epochs);
    s.read("lr", c.qc.mlp.lr);
    s.read("batch_size", c.qc.mlp.batch_size);
    s.read("val_fraction", c.qc.mlp.val_fraction);
    s.finish();
  }
  if (const json* d = root.child("discrepancy")) {
    Section s(*d, "discrepancy");
    if (const json* g = s.child("gamma")) {
      if (g->is_string() && g->get<std::string>() == "median") {
        c.adapt.kernel.mode = KernelConfig::Mode::MedianHeuristic;
      } else if (g->is_number()) {
        c.adapt.kernel.mode = KernelConfig::Mode::Fixed;
        c.adapt.kernel.gamma = g->get<double>();
      } else {
        throw ValidationError("config: 'discrepancy.gamma' must be \"median\" or a positive number");
      }
    }
    s.read("epsilon_floor", c.adapt.kernel.epsilon_floor);
    s.read("use_caqa", c.adapt.use_caqa);
    s.read("use_qc4qa", c.adapt.use_qc4qa);
    s.finish();
  }
  if (const json* a = root.child("adapt")) {
    Section s(*a, "adapt");
    s.read("lambda", c.adapt.lambda);
    s.read("lambda_con", c.adapt.lambda_con);
    s.read("batch_target", c.adapt.batch_target);
    s.read("epochs", c.adapt.epochs);
    s.read("eval_every", c.adapt.eval_every);
    std::string sampling = c.adapt.sampling == Sampling::DistributionAware ? "distribution_aware" : "random";
    s.read("sampling", sampling);
    if (sampling == "distribution_aware") {
      c.adapt.sampling = Sampling::DistributionAware;
    } else if (sampling == "random") {
      c.adapt.sampling = Sampling::Random;
    } else {
      throw ValidationError("config: 'adapt.sampling' must be \"distribution_aware\" or \"random\"");
    }
    s.read("annotations_budget", c.adapt.annotations_budget);
    s.read("nll_only", c.adapt.nll_only);
    s.read_optional_int("max_answer_len", c.adapt.max_answer_len);
    read_optimizer(s, c.adapt.optimizer);
    s.finish();
  }
  if (const json* e = root.child("export")) {
    Section s(*e, "export");
    s.read("corpus", c.export_features.corpus);
    s.read("checkpoint", c.export_features.checkpoint);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["workdir"] = c.workdir.string();
  j["run_name"] = c.run_name;
  j["data"] = {{"source", spec_json(c.data.source)},
               {"target", spec_json(c.data.target)},
               {"dev_samples", c.data.dev_samples},
               {"qc_train_questions", c.data.qc_train_questions},
               {"qc_test_questions", c.data.qc_test_questions},
               {"qc_cloze_fraction", c.data.qc_cloze_fraction}};
  j["model"] = {{"dim", c.model.dim}, {"hidden", c.model.hidden}, {"prior_noise", c.model.prior_noise}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"batch_size", c.pretrain.batch_size},
                   {"dev_fraction", c.pretrain.dev_fraction},
                   {"max_answer_len", optional_int_json(c.pretrain.max_answer_len)},
                   {"lr", c.pretrain.optimizer.lr},
                   {"warmup_fraction", c.pretrain.optimizer.warmup_fraction},
                   {"weight_decay", c.pretrain.optimizer.weight_decay}};
  j["qc"] = {{"mode", c.qc.mode == QcMode::Trec ? "trec" : "kmeans"},
             {"k", c.qc.k},
             {"sample_cap", c.qc.sample_cap},
             {"max_iters", c.qc.max_iters},
             {"tol", c.qc.tol},
             {"embed_dim", c.qc.mlp.embed_dim},
             {"hidden", c.qc.mlp.hidden},
             {"epochs", c.qc.mlp.epochs},
             {"lr", c.qc.mlp.lr},
             {"batch_size", c.qc.mlp.batch_size},
             {"val_fraction", c.qc.mlp.val_fraction}};
  nlohmann::ordered_json gamma = "median";
  if (c.adapt.kernel.mode == KernelConfig::Mode::Fixed) gamma = c.adapt.kernel.gamma;
  j["discrepancy"] = {{"gamma", gamma},
                      {"epsilon_floor", c.adapt.kernel.epsilon_floor},
                      {"use_caqa", c.adapt.use_caqa},
                      {"use_qc4qa", c.adapt.use_qc4qa}};
  j["adapt"] = {{"lambda", c.adapt.lambda},
                {"lambda_con", c.adapt.lambda_con},
                {"batch_target", c.adapt.batch_target},
                {"epochs", c.adapt.epochs},
                {"eval_every", c.adapt.eval_every},
                {"sampling", c.adapt.sampling == Sampling::DistributionAware ? "distribution_aware" : "random"},
                {"annotations_budget", c.adapt.annotations_budget},
                {"nll_only", c.adapt.nll_only},
                {"max_answer_len", optional_int_json(c.adapt.max_answer_len)},
                {"lr", c.adapt.optimizer.lr},
                {"warmup_fraction", c.adapt.optimizer.warmup_fraction},
                {"weight_decay", c.adapt.optimizer.weight_decay}};
  j["export"] = {{"corpus", c.export_features.corpus}, {"checkpoint", c.export_features.checkpoint}};
  return j;
}

void RunConfig::validate() const {
  data.source.validate();
  data.target.validate();
  if (data.dev_samples < 1) throw ValidationError("config: data.dev_samples must be at least 1");
  if (data.qc_train_questions < 1 || data.qc_test_questions < 1) {
    throw ValidationError("config: question-bank sizes must be positive");
  }
  if (!(data.qc_cloze_fraction >= 0.0 && data.qc_cloze_fraction <= 1.0)) {
    throw ValidationError("config: data.qc_cloze_fraction must lie in [0,1]");
  }
  if (model.dim <= 0 || model.hidden <= 0) throw ValidationError("config: model dimensions must be positive");
  pretrain.validate();
  if (qc.k < 1) throw ValidationError("config: qc.k must be at least 1");
  if (qc.sample_cap < qc.k) throw ValidationError("config: qc.sample_cap must be at least qc.k");
  if (qc.max_iters < 1 || !(qc.tol >= 0.0)) throw ValidationError("config: qc.max_iters/tol out of range");
  if (qc.mlp.embed_dim <= 0 || qc.mlp.hidden <= 0 || qc.mlp.epochs <= 0 || qc.mlp.batch_size <= 0 ||
      !(qc.mlp.lr > 0.0) || !(qc.mlp.val_fraction >= 0.0 && qc.mlp.val_fraction < 1.0)) {
    throw ValidationError("config: qc classifier settings out of range");
  }
  adapt.validate();
  if (run_name.empty() || run_name.find_first_of("/\\") != std::string::npos) {
    throw ValidationError("config: run_name must be a nonempty file name");
  }
  static const std::set<std::string> corpora = {"source", "target_train", "target_dev"};
  if (!corpora.contains(export_features.corpus)) {
    throw ValidationError("config: export.corpus must be source, target_train or target_dev");
  }
  if (export_features.checkpoint.empty()) throw ValidationError("config: export.checkpoint must be nonempty");
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config '" + path->string() + "'");
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError("config '" + path->string() + "': " + e.what());
    }
  }
  apply_overrides(doc, overrides);
  try {
    return config_from_json(doc);
  } catch (const ValidationError& e) {
    throw ValidationError((path ? path->string() + ": " : std::string()) + e.what());
  }
}

}  // namespace qc4qa
