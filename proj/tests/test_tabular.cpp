#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "fairsynth/fidelity.hpp"
#include "fairsynth/tabular.hpp"
#include "support.hpp"

using namespace fairsynth;
using namespace fairsynth::testing;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

Dataset read(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return read_csv(in, schema, "test.csv");
}

Dataset numbers(std::vector<double> values, int n_bins) {
  Dataset d{Schema({numeric("v", n_bins), target("y", "1")}), {}};
  for (double v : values) d.rows.push_back({v, std::string("1")});
  return d;
}

}  // namespace

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(Schema({categorical("a")}), ValidationError);  // no target
  CHECK_THROWS_AS(Schema({target("y", "1"), target("z", "1")}), ValidationError);
  CHECK_THROWS_AS(Schema({categorical("a"), categorical("a"), target("y", "1")}), ValidationError);
  CHECK_THROWS_AS(Schema({categorical(""), target("y", "1")}), ValidationError);
  ColumnSpec bad_target = numeric("y");
  bad_target.role = ColumnRole::target;
  bad_target.positive_class = "1";
  CHECK_THROWS_AS(Schema({bad_target}), ValidationError);
  ColumnSpec numeric_protected = numeric("p");
  numeric_protected.role = ColumnRole::protected_attribute;
  CHECK_THROWS_AS(Schema({numeric_protected, target("y", "1")}), ValidationError);
  CHECK_THROWS_AS(Schema({numeric("v", 0), target("y", "1")}), ValidationError);
}

TEST_CASE("generation order puts protected columns first and the target last") {
  const Schema s({categorical("a"), target("y", "1"), categorical("p", ColumnRole::protected_attribute), numeric("n"),
                  categorical("q", ColumnRole::protected_attribute)});
  CHECK(s.generation_order() == std::vector<std::size_t>{2, 4, 0, 3, 1});
  CHECK(s.target() == 1);
}

TEST_CASE("read_csv") {
  const Schema s({numeric("age"), categorical("w"), target("y", ">50K")});

  SECTION("two complete rows, extra columns ignored, spaces trimmed") {
    const Dataset d = read("w, extra ,age,y\n a ,1, 39 ,<=50K\nb,2,50,>50K\n", s);
    REQUIRE(d.size() == 2);
    CHECK(std::get<double>(d.rows[0][0]) == 39.0);
    CHECK(std::get<std::string>(d.rows[0][1]) == "a");
    CHECK(std::get<std::string>(d.rows[1][2]) == ">50K");
    for (const auto& row : d.rows)
      for (const auto& cell : row) CHECK_FALSE(is_missing(cell));
  }
  SECTION("? is missing") {
    const Dataset d = read("age,w,y\n?,?,>50K\n", s);
    CHECK(is_missing(d.rows[0][0]));
    CHECK(is_missing(d.rows[0][1]));
  }
  SECTION("malformed number names row and column") {
    CHECK_THROWS_WITH(read("age,w,y\n1,a,x\nabc,a,x\n", s), ContainsSubstring("line 3") && ContainsSubstring("age"));
  }
  SECTION("missing header column") {
    CHECK_THROWS_WITH(read("age,y\n1,x\n", s), ContainsSubstring("'w'"));
  }
  SECTION("empty file") { CHECK_THROWS_AS(read("", s), ValidationError); }
}

TEST_CASE("csv round trip keeps labels, numbers and missing cells") {
  const Schema s({numeric("n"), categorical("c"), target("y", "1")});
  const Dataset d = read("n,c,y\n0.1,\"x, y\",1\n?,?,0\n1e-300,z,1\n", s);
  std::ostringstream out;
  write_csv(out, d);
  CHECK(read(out.str(), s) == d);
}

TEST_CASE("quantile edges use linear interpolation between order statistics") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  CHECK(quantile_edges(v, 4) == std::vector<double>{1.0, 25.75, 50.5, 75.25, 100.0});
}

TEST_CASE("fit_encoder") {
  SECTION("categories in first-appearance order with trailing missing category") {
    const Schema s({categorical("c"), target("y", "1")});
    const Dataset d = read("c,y\na,1\nb,1\na,0\n?,1\n", s);
    const Encoder e = fit_encoder(d);
    CHECK(e.column(0).categories == std::vector<std::string>{"a", "b", "?"});
    CHECK(e.cardinality(0) == 3);
  }
  SECTION("constant numeric column collapses to one bin") {
    const Encoder e = fit_encoder(numbers({7, 7, 7}, 10));
    CHECK(e.column(0).edges == std::vector<double>{7.0});
    CHECK(e.cardinality(0) == 1);
    CHECK(e.encode_cell(0, 7.0) == 0);
  }
  SECTION("heavy point mass deduplicates edges") {
    const Encoder e = fit_encoder(numbers({0, 0, 0, 0, 0, 0, 0, 0, 5, 10}, 10));
    const auto& edges = e.column(0).edges;
    CHECK(std::adjacent_find(edges.begin(), edges.end(), std::greater_equal<>()) == edges.end());
    CHECK(edges.front() == 0.0);
    CHECK(edges.back() == 10.0);
  }
  SECTION("all-missing numeric column is an error") {
    Dataset d{Schema({numeric("v"), target("y", "1")}), {{std::monostate{}, std::string("1")}}};
    CHECK_THROWS_AS(fit_encoder(d), ValidationError);
  }
  SECTION("numeric missing values get an extra category") {
    Dataset d = numbers({1, 2, 3, 4}, 2);
    d.rows.push_back({std::monostate{}, std::string("1")});
    const Encoder e = fit_encoder(d);
    CHECK(e.cardinality(0) == 3);
    CHECK(e.encode_cell(0, std::monostate{}) == 2);
  }
}

TEST_CASE("encode maps values to half-open bins, last bin closed") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  const Encoder e = fit_encoder(numbers(v, 4));
  CHECK(e.encode_cell(0, 1.0) == 0);
  CHECK(e.encode_cell(0, 25.75) == 1);
  CHECK(e.encode_cell(0, 25.7) == 0);
  CHECK(e.encode_cell(0, 100.0) == 3);
  CHECK(e.encode_cell(0, 1000.0) == 3);  // clamps
  CHECK(e.encode_cell(0, -5.0) == 0);
}

TEST_CASE("encode rejects unseen categories") {
  const Schema s({categorical("c"), target("y", "1")});
  const Encoder e = fit_encoder(read("c,y\na,1\nb,0\n", s));
  CHECK_THROWS_WITH(encode(read("c,y\nz,1\n", s), e), ContainsSubstring("unseen"));
}

TEST_CASE("decode") {
  SECTION("categorical round trip is the identity") {
    const Schema s({categorical("c"), categorical("d"), target("y", "1")});
    const Dataset d = read("c,d,y\na,x,1\nb,?,0\na,y,0\n", s);
    CHECK(decode(encode(d, fit_encoder(d)), 3) == d);
  }
  SECTION("numeric values stay in their bin and encode is a fixed point") {
    const Dataset d = toy_data(200, 8);
    const Encoder e = fit_encoder(d);
    const EncodedDataset once = encode(d, e);
    const EncodedDataset twice = encode(decode(once, 12), e);
    CHECK(once == twice);
  }
  SECTION("uniform draws inside a bin") {
    Dataset d{Schema({numeric("v", 1), target("y", "1")}), {{0.0, std::string("1")}, {10.0, std::string("1")}}};
    const Encoder e = fit_encoder(d);
    EncodedDataset enc{d.schema, e, 1000, std::vector<std::int32_t>(2000, 0)};
    const Dataset out = decode(enc, 2024);
    double sum = 0.0;
    for (const auto& row : out.rows) {
      const double v = std::get<double>(row[0]);
      CHECK(v >= 0.0);
      CHECK(v < 10.0);
      sum += v;
    }
    CHECK_THAT(sum / 1000.0, WithinAbs(5.0, 0.5));
  }
  SECTION("index out of range") {
    const Dataset d = toy_data(20, 1);
    EncodedDataset enc = encode(d, fit_encoder(d));
    enc.cells[1] = 99;
    CHECK_THROWS_AS(decode(enc, 0), ValidationError);
  }
  SECTION("same seed, same rows") {
    const Dataset d = toy_data(50, 4);
    const EncodedDataset enc = encode(d, fit_encoder(d));
    CHECK(decode(enc, 5) == decode(enc, 5));
    CHECK_FALSE(decode(enc, 5) == decode(enc, 6));
  }
}

TEST_CASE("inject_proxy") {
  Dataset d{Schema({categorical("sex", ColumnRole::protected_attribute), target("y", "1")}), {}};
  for (int i = 0; i < 32000; ++i) d.rows.push_back({std::string(i % 3 == 0 ? "Female" : "Male"), std::string("0")});

  auto proxy_rate = [](const Dataset& out, const std::string& sex) {
    double ones = 0, n = 0;
    for (const auto& row : out.rows)
      if (std::get<std::string>(row[0]) == sex) {
        ++n;
        ones += std::get<std::string>(row[2]) == "1";
      }
    return ones / n;
  };

  SECTION("p = 0.9") {
    const Dataset out = inject_proxy(d, "sex", "Female", 0.9, 1);
    CHECK(out.schema.column(2).name == "proxy");
    CHECK(out.schema.column(2).role == ColumnRole::plain);
    CHECK_THAT(proxy_rate(out, "Female"), WithinAbs(0.9, 0.01));
    CHECK_THAT(proxy_rate(out, "Male"), WithinAbs(0.1, 0.01));
    CHECK(inject_proxy(d, "sex", "Female", 0.9, 1) == out);
  }
  SECTION("p = 1 copies the indicator") {
    const Dataset out = inject_proxy(d, "sex", "Female", 1.0, 2);
    CHECK(proxy_rate(out, "Female") == 1.0);
    CHECK(proxy_rate(out, "Male") == 0.0);
  }
  SECTION("p = 0.5 is independent of sex") {
    const Dataset out = inject_proxy(d, "sex", "Female", 0.5, 3);
    CHECK(cramers_v(out, "sex", "proxy", fit_encoder(out)).value <= 0.03);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(inject_proxy(d, "sex", "Other", 0.9, 1), ValidationError);
    CHECK_THROWS_AS(inject_proxy(d, "nope", "Female", 0.9, 1), ValidationError);
    CHECK_THROWS_AS(inject_proxy(d, "sex", "Female", 1.5, 1), ValidationError);
    const Dataset once = inject_proxy(d, "sex", "Female", 0.9, 1);
    CHECK_THROWS_AS(inject_proxy(once, "sex", "Female", 0.9, 1), ValidationError);
  }
}

TEST_CASE("filter_rows keeps listed labels in file order") {
  const Dataset d = gerrymandered_dataset();
  const Dataset w = filter_rows(d, "race", {"W"});
  CHECK(w.size() == 200);
  for (const auto& row : w.rows) CHECK(std::get<std::string>(row[1]) == "W");
}
