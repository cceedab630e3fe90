#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "qc4qa/config.hpp"
#include "qc4qa/error.hpp"

using namespace qc4qa;
using nlohmann::json;

TEST_CASE("defaults are the canonical configuration") {
  const RunConfig c = load_config(std::nullopt);
  CHECK(c.seed == 42);
  CHECK(c.data.source.n_samples == 5000);
  CHECK(c.data.target.n_samples == 5000);
  CHECK(c.data.dev_samples == 1000);
  CHECK(c.data.target.cloze_fraction == 1.0);
  CHECK(c.data.target.vocab_drift == 0.3);
  CHECK(c.data.source.class_mixture[3] == 0.199);
  CHECK(c.data.target.class_mixture[2] == 0.392);
  CHECK(c.adapt.lambda == 1e-3);
  CHECK(c.adapt.lambda_con == 0.4);
  CHECK(c.qc.k == 5);
  CHECK(c.qc.sample_cap == 10000);
  CHECK(c.pretrain.epochs == 2);
  CHECK(c.pretrain.optimizer.warmup_fraction == 0.0);
  CHECK(c.adapt.optimizer.warmup_fraction == 0.1);
}

TEST_CASE("json round trip") {
  RunConfig c;
  c.seed = 7;
  c.adapt.lambda = 0.05;
  c.qc.mode = QcMode::KMeans;
  c.adapt.kernel.mode = KernelConfig::Mode::Fixed;
  c.adapt.kernel.gamma = 2.5;
  c.adapt.max_answer_len = 3;
  const RunConfig back = config_from_json(json::parse(config_to_json(c).dump()));
  CHECK(config_to_json(back).dump() == config_to_json(c).dump());
  CHECK(back.adapt.kernel.gamma == 2.5);
  CHECK(back.qc.mode == QcMode::KMeans);
}

TEST_CASE("strict parsing") {
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"sead": 1})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"adapt": {"lamda": 1}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"adapt": {"lambda": "big"}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"adapt": {"sampling": "uniform"}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"qc": {"mode": "svm"}})")), ValidationError);
  try {
    config_from_json(json::parse(R"({"data": {"target": {"colze_fraction": 1}}})"));
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("data.target") != std::string::npos);
  }
}

TEST_CASE("numeric bounds are validated at load") {
  CHECK_THROWS(load_config(std::nullopt, {"adapt.lambda_con=1.5"}));
  CHECK_THROWS(load_config(std::nullopt, {"adapt.batch_target=0"}));
  CHECK_THROWS(load_config(std::nullopt, {"data.source.class_mixture=[0.5,0.5,0.5,0,0,0]"}));
  CHECK_THROWS(load_config(std::nullopt, {"qc.k=0"}));
}

TEST_CASE("overrides") {
  const RunConfig c = load_config(std::nullopt, {"adapt.lambda=0", "run_name=sweep", "discrepancy.gamma=3", "seed=9"});
  CHECK(c.adapt.lambda == 0.0);
  CHECK(c.run_name == "sweep");
  CHECK(c.adapt.kernel.mode == KernelConfig::Mode::Fixed);
  CHECK(c.adapt.kernel.gamma == 3.0);
  CHECK(c.seed == 9);
  CHECK_THROWS(load_config(std::nullopt, {"no_equals_sign"}));

  const auto dir = testing::scratch_dir("config");
  std::ofstream(dir / "c.json") << R"({"adapt": {"lambda": 0.01, "epochs": 2}, "workdir": "w"})";
  const RunConfig f = load_config(dir / "c.json", {"adapt.lambda=0.02"});
  CHECK(f.adapt.lambda == 0.02);  // flags win over the file
  CHECK(f.adapt.epochs == 2);
  CHECK(f.workdir == "w");
  std::ofstream(dir / "bad.json") << "{oops";
  CHECK_THROWS(load_config(dir / "bad.json"));
}
