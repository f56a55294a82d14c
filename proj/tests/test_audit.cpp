#include <catch_amalgamated.hpp>

#include <numeric>
#include <sstream>

#include "fairsynth/audit.hpp"
#include "property_checks.hpp"
#include "support.hpp"

using namespace fairsynth;
using namespace fairsynth::testing;
using Catch::Matchers::WithinAbs;

namespace {

std::optional<double> auc(std::vector<double> s, std::vector<int> y) { return auc_score(s, y); }

// y independent of g; y = 1 iff x = "p"
Dataset independent_data(std::size_t n, std::uint64_t seed) {
  Dataset d = toy_data(n, seed, 0.0, 0.0);
  for (auto& row : d.rows) row[3] = std::string(std::get<std::string>(row[1]) == "p" ? "1" : "0");
  return d;
}

}  // namespace

TEST_CASE("split_holdout") {
  const Dataset d = toy_data(10, 1);
  const auto [train, holdout] = split_holdout(d, 0.2, 7);
  CHECK(train.size() == 8);
  CHECK(holdout.size() == 2);
  std::size_t found = 0;
  for (const auto& row : d.rows) {
    const bool in_train = std::find(train.rows.begin(), train.rows.end(), row) != train.rows.end();
    const bool in_hold = std::find(holdout.rows.begin(), holdout.rows.end(), row) != holdout.rows.end();
    found += in_train != in_hold;
  }
  CHECK(found == 10);
  CHECK(split_holdout(d, 0.2, 7) == split_holdout(d, 0.2, 7));
  CHECK_THROWS_AS(split_holdout(d, 1.0, 7), ValidationError);

  SECTION("holdout class balance at n = 32k") {
    const Dataset big = toy_data(32000, 2);
    const auto [tr, ho] = split_holdout(big, 0.2, 3);
    auto rate = [](const Dataset& x) {
      double pos = 0;
      for (const auto& row : x.rows) pos += std::get<std::string>(row[3]) == "1";
      return pos / static_cast<double>(x.size());
    };
    CHECK(std::abs(rate(ho) - rate(big)) <= 0.02);
  }
}

TEST_CASE("auc_score") {
  CHECK(*auc({0.9, 0.8, 0.3}, {1, 1, 0}) == 1.0);
  CHECK(*auc({0.9, 0.8, 0.3}, {1, 0, 1}) == 0.5);
  CHECK(*auc({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK_FALSE(auc({0.1, 0.2}, {1, 1}).has_value());
  CHECK(check_auc_oracle().ok);
}

TEST_CASE("classification_metrics") {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  const auto m = classification_metrics(s, y);
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(*m.auc == 1.0);
  const auto single = classification_metrics(std::vector<double>{0.9}, std::vector<int>{1});
  CHECK_FALSE(single.auc.has_value());
}

TEST_CASE("logistic regression") {
  SECTION("separable toy set") {
    Dataset d{Schema({numeric("a"), numeric("b"), target("y", "1")}), {}};
    d.rows = {{0.0, 0.0, std::string("0")}, {0.0, 1.0, std::string("0")}, {3.0, 0.0, std::string("1")}, {3.0, 1.0, std::string("1")}};
    const LogRegModel m = fit_logreg(d);
    CHECK(evaluate(m, d).accuracy == 1.0);
  }
  SECTION("log-loss gradient matches finite differences") {
    const Dataset d = toy_data(40, 6);
    LogRegModel m;
    m.features = fit_feature_map(d);
    m.weights.resize(m.features.dim);
    SplitMix64 rng(1);
    for (double& w : m.weights) w = rng.uniform() - 0.5;
    m.bias = 0.3;
    const LabeledRows rows = labeled_rows(m.features, d);
    LogRegModel g = zeros_like(m);
    logreg_loss(m, rows, 0.01, &g);
    CHECK(grad_check([&](const LogRegModel& p) { return logreg_loss(p, rows, 0.01); }, m, g).passed);
  }
  SECTION("unseen categories map to an all-zero block") {
    const Dataset d = toy_data(50, 2);
    const FeatureMap map = fit_feature_map(d);
    std::vector<Cell> row = d.rows[0];
    row[1] = std::string("never-seen");
    for (const auto& [i, v] : featurize(map, row)) {
      const auto& block = map.blocks[1];
      CHECK_FALSE((i >= block.offset && i < block.offset + block.categories.size()));
    }
  }
  SECTION("features are standardized with training statistics") {
    const Dataset d = toy_data(500, 3);
    const FeatureMap map = fit_feature_map(d);
    double sum = 0.0;
    for (const auto& row : d.rows)
      for (const auto& [i, v] : featurize(map, row))
        if (i == map.blocks[2].offset) sum += v;
    CHECK_THAT(sum / 500.0, WithinAbs(0.0, 1e-12));
  }
}

TEST_CASE("propensity_audit") {
  SECTION("target independent of the protected column gives a small gap") {
    const Dataset d = independent_data(4000, 8);
    const auto [train, holdout] = split_holdout(d, 0.3, 1);
    const PropensityAudit a = propensity_audit(fit_logreg(train), holdout, "g");
    // y is a function of x alone, so the gap tracks the holdout's own group difference in P(y = 1)
    double pos[2] = {0, 0}, cnt[2] = {0, 0};
    for (const auto& row : holdout.rows) {
      const int k = std::get<std::string>(row[0]) == "a" ? 0 : 1;
      cnt[k] += 1;
      pos[k] += std::get<std::string>(row[3]) == "1";
    }
    CHECK_THAT(a.mean_gap, WithinAbs(std::abs(pos[0] / cnt[0] - pos[1] / cnt[1]), 0.02));
    CHECK(a.groups.size() == 2);
    for (const auto& g : a.groups) CHECK(std::accumulate(g.histogram.begin(), g.histogram.end(), std::size_t{0}) == g.count);
  }
  SECTION("constant model") {
    const Dataset d = toy_data(200, 9);
    LogRegModel m;
    m.features = fit_feature_map(d);
    m.weights.assign(m.features.dim, 0.0);
    const PropensityAudit a = propensity_audit(m, d, "g");
    CHECK(a.mean_gap == 0.0);
    CHECK(a.ks == 0.0);
    CHECK(a.groups[0].histogram[25] == a.groups[0].count);  // p = 0.5 falls in [0.5, 0.52)
  }
  SECTION("biased data gives a gap") {
    const Dataset d = toy_data(3000, 10, 0.8, 0.1);
    const PropensityAudit a = propensity_audit(fit_logreg(d), d, "g");
    CHECK(a.mean_gap > 0.5);
    CHECK(a.ks > 0.5);
  }
}

TEST_CASE("run_audit") {
  const Dataset d = toy_data(600, 12);
  const auto [train, holdout] = split_holdout(d, 0.2, 4);
  AuditConfig cfg;
  cfg.reps = 1;
  cfg.logreg.epochs = 100;

  SECTION("a copy of the training data scores like the original") {
    const AuditReport r = run_audit(train, holdout, [&](int) { return train; }, cfg);
    REQUIRE(r.runs.size() == 2);
    CHECK(r.runs[0].metrics.accuracy == r.runs[1].metrics.accuracy);
    CHECK(*r.runs[0].metrics.auc == *r.runs[1].metrics.auc);
    CHECK(r.runs[0].propensity.mean_gap == r.runs[1].propensity.mean_gap);
  }
  SECTION("report shape and plot table") {
    cfg.reps = 3;
    const AuditReport r = run_audit(train, holdout, [&](int) { return train; }, cfg);
    CHECK(r.summary("synthetic").runs == 3);
    CHECK(r.summary("original").runs == 1);
    const auto j = to_json(r);
    CHECK(j["summary"].contains("original"));
    CHECK(j["runs"].size() == 4);
    std::ostringstream csv;
    write_propensity_csv(csv, r);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 4 * 2 * 50);
  }
  SECTION("reproducible") { CHECK(check_reproducibility().ok); }
}
