#include <catch_amalgamated.hpp>

#include <cmath>

#include "fairsynth/fidelity.hpp"
#include "fairsynth/model.hpp"
#include "property_checks.hpp"
#include "support.hpp"

using namespace fairsynth;
using namespace fairsynth::testing;
using Catch::Matchers::WithinAbs;

namespace {

Dataset labels_only(const std::vector<std::pair<std::string, int>>& counts) {
  Dataset d{Schema({target("y", "a")}), {}};
  for (const auto& [label, n] : counts)
    for (int i = 0; i < n; ++i) d.rows.push_back({label});
  return d;
}

Dataset three_columns() {
  Dataset d{Schema({categorical("a"), categorical("b"), target("c", "0")}), {}};
  for (int i = 0; i < 24; ++i)
    d.rows.push_back({std::to_string(i % 2), std::to_string(i % 3), std::to_string(i % 4)});
  return d;
}

TrainConfig quick(double lambda, int epochs, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.lambda = lambda;
  cfg.epochs = epochs;
  cfg.batch_size = 128;
  cfg.hidden_dim = 8;
  cfg.learning_rate = 0.01;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("init_model") {
  SECTION("one column gives a single zero-input head") {
    const Dataset d = labels_only({{"a", 2}, {"b", 1}, {"c", 1}});
    const GenerativeModel m = init_model(fit_encoder(d), d.schema, TrainConfig{});
    REQUIRE(m.params.heads.size() == 1);
    CHECK(std::get<ZeroInputHead>(m.params.heads[0]).logits.size() == 3);
  }
  SECTION("head dimensions follow the cardinalities") {
    const Dataset d = three_columns();
    TrainConfig cfg;
    cfg.hidden_dim = 5;
    const GenerativeModel m = init_model(fit_encoder(d), d.schema, cfg);
    CHECK(std::get<ZeroInputHead>(m.params.heads[0]).logits.size() == 2);
    const auto& h1 = std::get<DenseHead>(m.params.heads[1]);
    const auto& h2 = std::get<DenseHead>(m.params.heads[2]);
    CHECK((h1.input_dim == 2 && h1.output_dim == 3));
    CHECK((h2.input_dim == 5 && h2.output_dim == 4));
  }
  SECTION("same seed, same parameters") {
    const Dataset d = three_columns();
    TrainConfig cfg;
    cfg.seed = 4;
    CHECK(init_model(fit_encoder(d), d.schema, cfg).params == init_model(fit_encoder(d), d.schema, cfg).params);
  }
  SECTION("positive class must occur") {
    Dataset d = labels_only({{"b", 2}});
    CHECK_THROWS_AS(init_model(fit_encoder(d), d.schema, TrainConfig{}), ValidationError);
  }
}

TEST_CASE("accuracy_loss") {
  SECTION("uniform binary head costs ln 2") {
    const Dataset d = labels_only({{"a", 3}, {"b", 5}});
    const Encoder e = fit_encoder(d);
    CHECK_THAT(accuracy_loss(init_model(e, d.schema, TrainConfig{}), encode(d, e)), WithinAbs(std::log(2.0), 1e-15));
  }
  SECTION("near-certain head costs almost nothing") {
    const Dataset d = labels_only({{"a", 4}});
    const Dataset both = labels_only({{"a", 4}, {"b", 1}});
    const Encoder e = fit_encoder(both);
    GenerativeModel m = init_model(e, both.schema, TrainConfig{});
    std::get<ZeroInputHead>(m.params.heads[0]).logits = {50.0, -50.0};
    CHECK(accuracy_loss(m, encode(d, e)) < 1e-12);
  }
  SECTION("training a single column recovers the frequencies") {
    const Dataset d = labels_only({{"a", 3}, {"b", 1}});
    const Encoder e = fit_encoder(d);
    TrainConfig cfg = quick(0.0, 2000);
    cfg.batch_size = 4;
    const TrainResult r = train(init_model(e, d.schema, cfg), encode(d, e), cfg);
    const auto p = forward(std::get<ZeroInputHead>(r.model.params.heads[0])).probs;
    CHECK_THAT(p[0], WithinAbs(0.75, 0.01));
    CHECK_THAT(p[1], WithinAbs(0.25, 0.01));
  }
}

TEST_CASE("conditional_target_probs") {
  const Dataset d = toy_data(500, 2, 1.0, 0.0);  // y = 1 iff g = a
  const Encoder e = fit_encoder(d);
  const EncodedDataset enc = encode(d, e);

  SECTION("zero target head is uniform") {
    GenerativeModel m = init_model(e, d.schema, TrainConfig{});
    auto& head = std::get<DenseHead>(m.params.heads.back());
    std::fill(head.w2.begin(), head.w2.end(), 0.0);
    for (double p : conditional_target_probs(m, enc)) CHECK_THAT(p, WithinAbs(0.5, 1e-15));
  }
  SECTION("deterministic rule is learned") {
    const TrainConfig cfg = quick(0.0, 200);
    const TrainResult r = train(init_model(e, d.schema, cfg), enc, cfg);
    const auto p = conditional_target_probs(r.model, enc);
    const std::size_t g = d.schema.index_of("g");
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool a = std::get<std::string>(d.rows[i][g]) == "a";
      CHECK_THAT(p[i], WithinAbs(a ? 1.0 : 0.0, 0.02));
    }
  }
  SECTION("conditionals are distributions") {
    const GenerativeModel m = toy_problem(4).model;
    const EncodedDataset data = toy_problem(4).data;
    for (std::size_t i = 0; i < data.n_rows; ++i) {
      const auto p = conditional_probs(m, data.row(i), m.layout.positions() - 1);
      CHECK_THAT(p[0] + p[1], WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("parity penalty") {
  CHECK(parity_penalty(std::vector<double>{0.2, 0.2, 0.2}) == 0.0);
  CHECK_THAT(parity_penalty(std::vector<double>{0.3, 0.1}), WithinAbs(0.04, 1e-15));
  CHECK_THAT(parity_penalty(std::vector<double>{0.1, 0.2, 0.3}), WithinAbs(0.02, 1e-15));
  CHECK(parity_penalty(std::vector<double>{0.4}) == 0.0);
}

TEST_CASE("fairness loss") {
  const ToyProblem p = toy_problem(6, 60);
  const TrainConfig cfg = [] {
    TrainConfig c;
    c.min_group_count = 1;
    return c;
  }();
  const double base = fairness_loss(p.model, p.data, p.groups, cfg);
  CHECK(base > 0.0);

  SECTION("invariant under group relabeling") {
    GroupAssignment swapped = p.groups;
    for (auto& id : swapped.ids) id = id >= 0 ? 1 - id : id;
    CHECK_THAT(fairness_loss(p.model, p.data, swapped, cfg), WithinAbs(base, 1e-15));
  }
  SECTION("invariant under row order") {
    std::vector<std::size_t> rows = p.rows;
    std::reverse(rows.begin(), rows.end());
    const double reversed = combined_loss(p.model, p.data, rows, p.groups.ids, 0.0, 1).fairness;
    CHECK_THAT(reversed, WithinAbs(base, 1e-15));
  }
  SECTION("groups below min_group_count are skipped") {
    TrainConfig strict = cfg;
    strict.min_group_count = 1000;
    CHECK(fairness_loss(p.model, p.data, p.groups, strict) == 0.0);
    const BatchLoss l = combined_loss(p.model, p.data, p.rows, p.groups.ids, 1.0, 1000);
    CHECK(l.groups_skipped == 2);
    CHECK(l.groups_used == 0);
  }
  SECTION("groups are the joint protected values") {
    const Dataset d = gerrymandered_dataset();
    const EncodedDataset enc = encode(d, fit_encoder(d));
    const GroupAssignment g = assign_groups(enc);
    CHECK(g.n_groups == 4);
    std::set<std::int32_t> ids(g.ids.begin(), g.ids.end());
    CHECK(ids.size() == 4);
  }
}

TEST_CASE("gradient checks on toy schemas") {
  CHECK(check_grad_nll().ok);
  CHECK(check_grad_fairness().ok);
  CHECK(check_grad_combined().ok);
}

TEST_CASE("train") {
  const Dataset d = toy_data(600, 3);
  const Encoder e = fit_encoder(d);
  const EncodedDataset enc = encode(d, e);

  SECTION("history has one entry per epoch with both components") {
    const TrainConfig cfg = quick(0.5, 4);
    const TrainResult r = train(init_model(e, d.schema, cfg), enc, cfg);
    REQUIRE(r.history.epochs.size() == 4);
    for (const auto& s : r.history.epochs) {
      CHECK(s.accuracy_loss > 0.0);
      CHECK(s.fairness_loss >= 0.0);
      CHECK_THAT(s.combined_loss, WithinAbs(s.accuracy_loss + 0.5 * s.fairness_loss, 1e-12));
    }
  }
  SECTION("fairness component falls with lambda > 0 and not with lambda = 0") {
    const TrainResult fair = train(init_model(e, d.schema, quick(5.0, 30)), enc, quick(5.0, 30));
    const TrainResult plain = train(init_model(e, d.schema, quick(0.0, 30)), enc, quick(0.0, 30));
    const auto& hf = fair.history.epochs;
    const auto& hp = plain.history.epochs;
    CHECK(hf.back().fairness_loss < 0.25 * hf.front().fairness_loss);
    CHECK(hp.back().fairness_loss >= hp.front().fairness_loss);
  }
  SECTION("lambda = 0 never reads the group structure") {
    const TrainConfig cfg = quick(0.0, 3);
    const TrainResult with_groups = train(init_model(e, d.schema, cfg), enc, assign_groups(enc), cfg);
    GroupAssignment none;
    none.ids.assign(enc.n_rows, -1);
    const TrainResult without = train(init_model(e, d.schema, cfg), enc, none, cfg);
    CHECK(with_groups.model.params == without.model.params);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(with_groups.history.epochs[i].accuracy_loss == without.history.epochs[i].accuracy_loss);
      CHECK(with_groups.history.epochs[i].combined_loss == without.history.epochs[i].combined_loss);
    }
  }
  SECTION("same config, same history") {
    const TrainConfig cfg = quick(1.0, 3);
    const TrainResult a = train(init_model(e, d.schema, cfg), enc, cfg);
    const TrainResult b = train(init_model(e, d.schema, cfg), enc, cfg);
    CHECK(a.model.params == b.model.params);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.history.epochs[i].combined_loss == b.history.epochs[i].combined_loss);
  }
  SECTION("divergence is reported with its position") {
    TrainConfig cfg = quick(0.0, 2);
    cfg.learning_rate = 1e308;
    CHECK_THROWS_AS(train(init_model(e, d.schema, cfg), enc, cfg), NumericError);
  }
  SECTION("lambda = 0 reproduces the marginals") {
    const TrainConfig cfg = quick(0.0, 60);
    const TrainResult r = train(init_model(e, d.schema, cfg), enc, cfg);
    const EncodedDataset s = sample(r.model, 20000, 5);
    for (std::size_t j = 0; j < d.schema.size(); ++j) CHECK(tv_distance(marginal(s, j), marginal(enc, j)) <= 0.02);
  }
}

TEST_CASE("sample") {
  SECTION("certain heads give identical rows") {
    const Dataset d = three_columns();
    const Encoder e = fit_encoder(d);
    GenerativeModel m = init_model(e, d.schema, TrainConfig{});
    std::get<ZeroInputHead>(m.params.heads[0]).logits = {0.0, 1000.0};
    for (std::size_t k = 1; k < m.params.heads.size(); ++k) {
      auto& h = std::get<DenseHead>(m.params.heads[k]);
      std::fill(h.w2.begin(), h.w2.end(), 0.0);
      std::fill(h.b2.begin(), h.b2.end(), 0.0);
      h.b2[1] = 1000.0;
    }
    const EncodedDataset s = sample(m, 50, 1);
    for (std::size_t i = 0; i < 50; ++i) CHECK(std::vector<std::int32_t>(s.row(i).begin(), s.row(i).end()) == std::vector<std::int32_t>{1, 1, 1});
  }
  SECTION("one column with probabilities (0.75, 0.25)") {
    const Dataset d = labels_only({{"a", 1}, {"b", 1}});
    const Encoder e = fit_encoder(d);
    GenerativeModel m = init_model(e, d.schema, TrainConfig{});
    std::get<ZeroInputHead>(m.params.heads[0]).logits = {std::log(3.0), 0.0};
    const EncodedDataset s = sample(m, 10000, 77);
    CHECK_THAT(marginal(s, 0)[0], WithinAbs(0.75, 0.02));
  }
  SECTION("joint matches the model") { CHECK(check_sampler_chi_square().ok); }
  SECTION("deterministic per seed, row streams independent of n") {
    const ToyProblem p = toy_problem(2);
    CHECK(sample(p.model, 100, 3) == sample(p.model, 100, 3));
    const EncodedDataset small = sample(p.model, 10, 3);
    const EncodedDataset large = sample(p.model, 100, 3);
    CHECK(std::equal(small.cells.begin(), small.cells.end(), large.cells.begin()));
  }
  SECTION("n = 0") { CHECK(sample(toy_problem(1).model, 0, 1).n_rows == 0); }
}
