#include <doctest.h>

#include <sstream>

#include "core/data.hpp"
#include "core/error.hpp"
#include "core/experiment.hpp"

using namespace mcl;

namespace {

Pool tiny_pool() {
  GenSpec g;
  g.num_identities = 10;
  g.samples_per_identity = 12;
  g.d_raw = 12;
  g.intra_class_sigma = 0.2;
  g.seed = 21;
  return generate_pool(g);
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  TrainConfig& t = c.train;
  t.epochs = 4;
  t.warmup_epochs = 1;
  t.P = t.I = t.P2 = t.I2 = 4;
  t.clustering.k = 6;
  t.d_hidden = t.d_emb = 12;
  t.lr_decay_epochs = {};
  c.holdout_fraction = 0.3;
  return c;
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("config round trip through JSON") {
    ExperimentConfig c = tiny_config();
    c.train.triplet_weight = TripletWeight::kPlain;
    c.train.shared_label_space = true;
    const nlohmann::json j = config_to_json(c);
    CHECK(config_to_json(config_from_json(j)) == j);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"learning_rate", 0.1}}), Error);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"lr", "fast"}}), Error);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"triplet_weight", "squared"}}), Error);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), Error);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"holdout_fraction", 1.0}}), Error);
  }

  TEST_CASE("split ratio maps to a subset count") {
    CHECK(splits_from_ratio(1.0) == 1);
    CHECK(splits_from_ratio(0.5) == 2);
    CHECK(splits_from_ratio(0.25) == 4);
    CHECK(splits_from_ratio(0.3) == 3);
    CHECK_THROWS_AS(splits_from_ratio(0.0), Error);
    CHECK_THROWS_AS(splits_from_ratio(1.5), Error);
    CHECK(config_from_json(nlohmann::json{{"split_ratio", 0.25}}).train.splits == 4);
  }

  TEST_CASE("experiment split keeps identities whole") {
    const Pool p = tiny_pool();
    auto [train, eval] = experiment_split(p, 0.3);
    CHECK(train.size() + eval.size() == p.size());
    CHECK(eval.size() == 3 * 12);
    CHECK_THROWS_AS(experiment_split(p.subset(std::vector<std::size_t>{0, 1, 12, 13}), 0.3), Error);
  }

  TEST_CASE("git blob hash matches git for known content") {
    // `printf 'hello\n' | git hash-object --stdin`
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  }

  TEST_CASE("comparison rows, entries and budget table") {
    const Pool p = tiny_pool();
    const CompareResult r = compare_regimes(p, tiny_config(), {1.0, 0.5, 0.25});
    REQUIRE(r.rows.size() == 5);
    CHECK(r.rows[0].scheme == "all");
    CHECK(r.rows[1].scheme == "mcl");
    CHECK(r.rows[2].scheme == "naive");
    CHECK(r.rows[3].splits == 4);
    const std::size_t n = r.reports[0].train_samples;
    CHECK(r.rows[0].entries == 2ull * n * n);
    CHECK(r.rows[1].entries == 2ull * (n / 2) * (n / 2));
    CHECK(double(r.rows[1].entries) / double(r.rows[0].entries) == doctest::Approx(0.25).epsilon(0.02));
    for (const auto& row : r.rows) {
      CHECK(row.peak_bytes == row.entries * 8);
      CHECK(row.mAP >= 0.0);
      CHECK(row.mAP <= 1.0);
    }
    std::istringstream budget(budget_csv(r));
    std::string line;
    int lines = 0;
    while (std::getline(budget, line)) ++lines;
    CHECK(lines == 4);
    std::istringstream cmp(compare_csv(r));
    lines = 0;
    while (std::getline(cmp, line)) ++lines;
    CHECK(lines == 6);
  }

  TEST_CASE("run report records every epoch and serializes") {
    const RunResult r = run_experiment(tiny_pool(), tiny_config());
    CHECK(r.report.epochs.size() == 4);
    const nlohmann::json j = report_to_json(r.report);
    CHECK(j["epochs"].size() == 4);
    CHECK(j["final"]["mAP"].get<double>() == r.report.final_metrics.mAP);
    CHECK(j["totals"]["peak_bytes"].get<std::uint64_t>() == r.report.peak_bytes);
    CHECK(metrics_csv(r.report).rfind("epoch,mAP,rank1,entries,seconds\n", 0) == 0);
  }
}
