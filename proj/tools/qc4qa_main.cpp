// qc4qa command-line driver. Every subcommand takes the same configuration
// flags; convenience flags are folded into `--set` overrides and win over the
// config file.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qc4qa/config.hpp"
#include "qc4qa/error.hpp"
#include "qc4qa/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> workdir, run_name, sampling;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda, lambda_con;
  std::optional<int> k;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("-c,--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.sets, "override a config key, e.g. adapt.lambda=0.001")->allow_extra_args(false);
  cmd->add_option("--workdir", f.workdir, "working directory");
  cmd->add_option("--run-name", f.run_name, "name for the adapted checkpoint and report");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--lambda", f.lambda, "discrepancy weight");
  cmd->add_option("--lambda-con", f.lambda_con, "pseudo-label confidence threshold");
  cmd->add_option("--k", f.k, "number of clusters");
  cmd->add_option("--sampling", f.sampling, "distribution_aware or random");
}

qc4qa::RunConfig resolve(const Flags& f) {
  std::vector<std::string> sets = f.sets;
  auto quoted = [](const std::string& s) { return nlohmann::json(s).dump(); };
  if (f.workdir) sets.push_back("workdir=" + quoted(*f.workdir));
  if (f.run_name) sets.push_back("run_name=" + quoted(*f.run_name));
  if (f.sampling) sets.push_back("adapt.sampling=" + quoted(*f.sampling));
  if (f.seed) sets.push_back("seed=" + std::to_string(*f.seed));
  if (f.lambda) sets.push_back("adapt.lambda=" + nlohmann::json(*f.lambda).dump());
  if (f.lambda_con) sets.push_back("adapt.lambda_con=" + nlohmann::json(*f.lambda_con).dump());
  if (f.k) sets.push_back("qc.k=" + std::to_string(*f.k));
  std::optional<std::filesystem::path> path;
  if (!f.config.empty()) path = f.config;
  return qc4qa::load_config(path, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qc4qa: question-class-aware domain adaptation for extractive QA"};
  app.require_subcommand(1);

  Flags flags;
  std::string mode;
  auto* gen = app.add_subcommand("gen-data", "generate synthetic source/target corpora");
  auto* pre = app.add_subcommand("pretrain", "train the span model on the labeled source corpus");
  auto* tqc = app.add_subcommand("train-qc", "train the supervised question classifier");
  auto* cls = app.add_subcommand("classify", "assign question classes to every corpus");
  cls->add_option("--mode", mode, "trec or kmeans")->check(CLI::IsMember({"trec", "kmeans"}));
  auto* ada = app.add_subcommand("adapt", "adapt the pretrained model to the target domain");
  auto* evl = app.add_subcommand("eval", "compare pretrained and adapted models on target dev");
  auto* exp = app.add_subcommand("export-features", "write 2D PCA projections of pooled features");
  auto* dump = app.add_subcommand("config", "print the resolved configuration");
  for (auto* cmd : {gen, pre, tqc, cls, ada, evl, exp, dump}) add_flags(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const qc4qa::RunConfig cfg = resolve(flags);
    std::ostream& log = std::cout;
    if (*gen) qc4qa::cmd_gen_data(cfg, log);
    if (*pre) qc4qa::cmd_pretrain(cfg, log);
    if (*tqc) qc4qa::cmd_train_qc(cfg, log);
    if (*cls) {
      qc4qa::QcMode m = cfg.qc.mode;
      if (mode == "trec") m = qc4qa::QcMode::Trec;
      if (mode == "kmeans") m = qc4qa::QcMode::KMeans;
      qc4qa::cmd_classify(cfg, m, log);
    }
    if (*ada) qc4qa::cmd_adapt(cfg, log);
    if (*evl) qc4qa::cmd_eval(cfg, log);
    if (*exp) qc4qa::cmd_export_features(cfg, log);
    if (*dump) log << qc4qa::config_to_json(cfg).dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "qc4qa: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
