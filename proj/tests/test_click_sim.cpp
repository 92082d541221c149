#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "vecrank/click_sim.hpp"

using namespace vecrank;
using Catch::Matchers::WithinAbs;

TEST_CASE("gamma maps grades to exponentially spaced gains in [0,1]") {
  REQUIRE(gamma_grade(1) == 0.0);
  REQUIRE_THAT(gamma_grade(2), WithinAbs(1.0 / 15.0, 1e-15));
  REQUIRE_THAT(gamma_grade(3), WithinAbs(0.2, 1e-15));
  REQUIRE_THAT(gamma_grade(4), WithinAbs(7.0 / 15.0, 1e-15));
  REQUIRE(gamma_grade(5) == 1.0);
  REQUIRE_THROWS(gamma_grade(0));
  REQUIRE_THROWS(gamma_grade(6));
}

TEST_CASE("default trust parameters follow the position formulas") {
  const auto p = TrustBiasParams::defaults();
  REQUIRE(p.theta[0] == 1.0);
  REQUIRE_THAT(p.theta[9], WithinAbs(0.1, 1e-15));
  REQUIRE_THAT(p.eps_plus[0], WithinAbs(0.98, 1e-15));
  REQUIRE_THAT(p.eps_plus[9], WithinAbs(0.89, 1e-15));
  REQUIRE_THAT(p.eps_minus[0], WithinAbs(0.65, 1e-15));
  REQUIRE_THAT(p.eps_minus[4], WithinAbs(0.13, 1e-15));
}

TEST_CASE("trust bias click probabilities at pinned cells") {
  const auto params = TrustBiasParams::defaults();
  REQUIRE_THAT(trust_click_prob(params, 1, 5), WithinAbs(0.98, 1e-15));
  REQUIRE_THAT(trust_click_prob(params, 1, 1), WithinAbs(0.65, 1e-15));
  REQUIRE_THAT(trust_click_prob(params, 2, 5), WithinAbs(0.485, 1e-15));
  REQUIRE_THAT(trust_click_prob(params, 10, 1), WithinAbs(0.0065, 1e-15));
  REQUIRE_THROWS(trust_click_prob(params, 0, 1));
  REQUIRE_THROWS(trust_click_prob(params, 11, 1));
}

TEST_CASE("position-based model multiplies examination and gain") {
  const auto params = TrustBiasParams::defaults();
  REQUIRE_THAT(pbm_click_prob(params, 1, 5), WithinAbs(1.0, 1e-15));
  REQUIRE(pbm_click_prob(params, 1, 1) == 0.0);
  REQUIRE_THAT(pbm_click_prob(params, 3, 3), WithinAbs(0.2 / 3.0, 1e-15));
}

TEST_CASE("click matrix validation rejects bad tables") {
  ClickMatrix m;
  for (int p = 1; p <= kNumPositions; ++p) {
    for (int y = 1; y <= kNumGrades; ++y) {
      m.set_rate(p, y, 0.1 * y);
    }
  }
  REQUIRE_NOTHROW(m.validate());
  SECTION("entry above one") {
    m.set_rate(4, 5, 1.5);
    REQUIRE_THROWS_WITH(m.validate(),
                        Catch::Matchers::ContainsSubstring("out of [0,1]"));
  }
  SECTION("row decreasing in grade") {
    m.set_rate(4, 5, 0.05);
    REQUIRE_THROWS_WITH(m.validate(),
                        Catch::Matchers::ContainsSubstring("non-decreasing"));
  }
}

TEST_CASE("click matrix csv round-trips") {
  const ClickMatrix m = default_real_click_matrix();
  std::istringstream in(m.to_csv());
  const ClickMatrix back = ClickMatrix::from_csv(in);
  for (int p = 1; p <= kNumPositions; ++p) {
    for (int y = 1; y <= kNumGrades; ++y) {
      REQUIRE(back.rate(p, y) == m.rate(p, y));
    }
  }
}

TEST_CASE("csv shape errors are rejected") {
  SECTION("truncated rows") {
    std::istringstream in("0.1,0.2,0.3,0.4,0.5\n");
    REQUIRE_THROWS(ClickMatrix::from_csv(in));
  }
  SECTION("short row") {
    std::string ten_rows;
    for (int i = 0; i < 10; ++i) ten_rows += "0.1,0.2,0.3\n";
    std::istringstream in(ten_rows);
    REQUIRE_THROWS(ClickMatrix::from_csv(in));
  }
}

TEST_CASE("built-in real-style matrix is valid, deterministic, not pure trust") {
  const ClickMatrix a = default_real_click_matrix();
  const ClickMatrix b = default_real_click_matrix();
  REQUIRE_NOTHROW(a.validate());
  const auto params = TrustBiasParams::defaults();
  int differing = 0;
  for (int p = 1; p <= kNumPositions; ++p) {
    for (int y = 1; y <= kNumGrades; ++y) {
      REQUIRE(a.rate(p, y) == b.rate(p, y));
      if (std::abs(a.rate(p, y) - trust_click_prob(params, p, y)) > 1e-6) {
        ++differing;
      }
    }
  }
  REQUIRE(differing > 30);
  // row 1 needs one amplitude halving to stay monotone: 0.65 * (1 + 0.05 * (6/7 - 1/2))
  REQUIRE_THAT(a.rate(1, 1), WithinAbs(0.6616071428571428, 1e-15));
}

namespace {

QueryList query_with_labels(std::int64_t qid, const std::vector<int>& labels,
                            double feature_scale) {
  QueryList q;
  q.qid = qid;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Document doc;
    doc.qid = qid;
    doc.label = labels[i];
    doc.features = {feature_scale * labels[i], 1.0};
    q.docs.push_back(doc);
  }
  return q;
}

}  // namespace

TEST_CASE("initial ranker learns a separable pairwise ordering") {
  std::vector<QueryList> train;
  train.push_back(query_with_labels(1, {0, 1, 2, 3, 4}, 1.0));
  train.push_back(query_with_labels(2, {4, 0, 2, 1, 3}, 1.0));
  const InitialRanker ranker = train_initial_ranker(train, 2, 1.0);
  REQUIRE(ranker.score({4.0, 1.0}) > ranker.score({3.0, 1.0}));
  REQUIRE(ranker.score({1.0, 1.0}) > ranker.score({0.0, 1.0}));
}

TEST_CASE("initial ranker requires discordant pairs") {
  std::vector<QueryList> train;
  train.push_back(query_with_labels(1, {2, 2, 2}, 1.0));
  REQUIRE_THROWS_WITH(train_initial_ranker(train, 2, 1.0),
                      Catch::Matchers::ContainsSubstring("discordant"));
}

TEST_CASE("initial ranker validates its fraction") {
  std::vector<QueryList> train;
  train.push_back(query_with_labels(1, {0, 1}, 1.0));
  REQUIRE_THROWS(train_initial_ranker(train, 2, 0.0));
  REQUIRE_THROWS(train_initial_ranker(train, 2, 1.5));
}

TEST_CASE("display order sorts by score, keeps ties stable, truncates to 10") {
  QueryList q = query_with_labels(5, {1, 3, 3, 0, 2, 1, 4, 0, 2, 1, 3, 2}, 1.0);
  InitialRanker ranker{{1.0, 0.0}};  // score equals the label
  const auto display = display_order(q, ranker);
  REQUIRE(display.size() == 10);
  for (int i = 0; i < 10; ++i) REQUIRE(display[i].position == i + 1);
  REQUIRE(display[0].doc_index == 6);  // the single grade-4 document
  // the three grade-3 documents keep file order 1, 2, 10
  REQUIRE(display[1].doc_index == 1);
  REQUIRE(display[2].doc_index == 2);
  REQUIRE(display[3].doc_index == 10);
}

TEST_CASE("sampled clicks are reproducible and track their rates") {
  QueryList q = query_with_labels(9, {4, 4, 4, 4, 4}, 1.0);
  InitialRanker ranker{{0.0, 0.0}};  // all scores tie, file order kept
  const auto display = display_order(q, ranker);
  ClickModelSpec spec;
  spec.setting = ClickSetting::kTrustBias;

  Rng r1(123), r2(123);
  const ClickLog a = sample_clicks(spec, q, display, r1);
  const ClickLog b = sample_clicks(spec, q, display, r2);
  REQUIRE(a.items.size() == 5);
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    REQUIRE(a.items[i].click == b.items[i].click);
  }

  Rng rng(7);
  int clicks_at_1 = 0;
  const int n = 4000;
  for (int s = 0; s < n; ++s) {
    const ClickLog log = sample_clicks(spec, q, display, rng);
    clicks_at_1 += log.items[0].click ? 1 : 0;
  }
  // position 1, grade 5 has rate 0.98 under trust bias
  REQUIRE_THAT(clicks_at_1 / static_cast<double>(n), WithinAbs(0.98, 0.01));
}

TEST_CASE("click logs round-trip through jsonl") {
  const std::string dir = test_util::scratch_dir("clicklog");
  QueryList q = query_with_labels(3, {0, 2, 4, 1}, 1.0);
  InitialRanker ranker{{1.0, 0.0}};
  ClickModelSpec spec;
  Rng rng(55);
  const auto logs =
      generate_click_logs(spec, {q}, ranker, /*sessions_per_query=*/3, rng);
  REQUIRE(logs.size() == 3);
  save_click_logs_jsonl(dir + "/logs.jsonl", logs);
  const auto back = load_click_logs_jsonl(dir + "/logs.jsonl");
  REQUIRE(back.size() == logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    REQUIRE(back[i].qid == logs[i].qid);
    REQUIRE(back[i].items.size() == logs[i].items.size());
    for (std::size_t j = 0; j < logs[i].items.size(); ++j) {
      REQUIRE(back[i].items[j].doc_index == logs[i].items[j].doc_index);
      REQUIRE(back[i].items[j].position == logs[i].items[j].position);
      REQUIRE(back[i].items[j].click == logs[i].items[j].click);
    }
  }
}
