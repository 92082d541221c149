#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "test_util.hpp"
#include "vecrank/data.hpp"

using namespace vecrank;

TEST_CASE("letor parsing groups documents by qid in first-appearance order") {
  std::istringstream in(
      "2 qid:10 1:0.5 3:1.5\n"
      "0 qid:11 2:2.0\n"
      "4 qid:10 1:1.0 2:-1.0 3:0.0  # trailing comment\n"
      "\n"
      "# a full comment line\n"
      "1 qid:11 3:0.25\n");
  const auto queries = parse_letor(in);
  REQUIRE(queries.size() == 2);
  REQUIRE(queries[0].qid == 10);
  REQUIRE(queries[1].qid == 11);
  REQUIRE(queries[0].docs.size() == 2);
  REQUIRE(queries[1].docs.size() == 2);
  REQUIRE(queries[0].docs[0].label == 2);
  REQUIRE(queries[0].docs[1].label == 4);
  REQUIRE(queries[0].docs[0].features == std::vector<double>{0.5, 0.0, 1.5});
  REQUIRE(queries[0].docs[1].features == std::vector<double>{1.0, -1.0, 0.0});
  REQUIRE(queries[1].docs[0].features == std::vector<double>{0.0, 2.0, 0.0});
}

TEST_CASE("letor parsing reports the offending line") {
  SECTION("label out of range") {
    std::istringstream in("5 qid:1 1:0.0\n");
    REQUIRE_THROWS_WITH(parse_letor(in),
                        Catch::Matchers::ContainsSubstring("line 1"));
  }
  SECTION("negative label") {
    std::istringstream in("0 qid:1 1:0.0\n-1 qid:1 1:0.0\n");
    REQUIRE_THROWS_WITH(parse_letor(in),
                        Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("missing qid") {
    std::istringstream in("1 1:0.0\n");
    REQUIRE_THROWS_WITH(parse_letor(in),
                        Catch::Matchers::ContainsSubstring("qid"));
  }
  SECTION("duplicate feature id") {
    std::istringstream in("1 qid:1 2:0.5 2:0.7\n");
    REQUIRE_THROWS_WITH(parse_letor(in),
                        Catch::Matchers::ContainsSubstring("duplicate"));
  }
  SECTION("malformed pair") {
    std::istringstream in("1 qid:1 2:\n");
    REQUIRE_THROWS(parse_letor(in));
  }
  SECTION("feature id beyond declared width") {
    std::istringstream in("1 qid:1 4:0.5\n");
    REQUIRE_THROWS_WITH(parse_letor(in, 3),
                        Catch::Matchers::ContainsSubstring("exceeds"));
  }
  SECTION("zero feature id") {
    std::istringstream in("1 qid:1 0:0.5\n");
    REQUIRE_THROWS_WITH(parse_letor(in),
                        Catch::Matchers::ContainsSubstring("1-based"));
  }
}

TEST_CASE("serialization round-trips documents bit-exactly") {
  Rng rng(33);
  std::vector<QueryList> queries;
  for (int q = 0; q < 4; ++q) {
    QueryList ql;
    ql.qid = 100 + q;
    for (int d = 0; d < 6; ++d) {
      Document doc;
      doc.qid = ql.qid;
      doc.label = rng.uniform_int(5);
      for (int f = 0; f < 7; ++f) doc.features.push_back(rng.gaussian() * 3.7);
      ql.docs.push_back(doc);
    }
    queries.push_back(ql);
  }
  std::istringstream in(serialize_letor(queries));
  const auto parsed = parse_letor(in, 7);
  REQUIRE(parsed.size() == queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    REQUIRE(parsed[q].qid == queries[q].qid);
    REQUIRE(parsed[q].docs.size() == queries[q].docs.size());
    for (std::size_t d = 0; d < queries[q].docs.size(); ++d) {
      REQUIRE(parsed[q].docs[d].label == queries[q].docs[d].label);
      REQUIRE(parsed[q].docs[d].features == queries[q].docs[d].features);
    }
  }
}

namespace {

Dataset tiny_dataset() {
  Dataset ds;
  ds.feature_count = 2;
  QueryList train1{1, {}};
  train1.docs.push_back({1, 0, {0.0, 5.0}});
  train1.docs.push_back({1, 2, {10.0, 5.0}});
  QueryList train2{2, {}};
  train2.docs.push_back({2, 1, {5.0, 5.0}});
  ds.train = {train1, train2};
  QueryList valid1{3, {}};
  valid1.docs.push_back({3, 0, {-5.0, 5.0}});
  valid1.docs.push_back({3, 1, {20.0, 5.0}});
  ds.valid = {valid1};
  ds.test = {};
  return ds;
}

}  // namespace

TEST_CASE("normalization uses train min-max and clips other splits") {
  const Dataset ds = normalize(tiny_dataset());
  REQUIRE(ds.train[0].docs[0].features[0] == 0.0);
  REQUIRE(ds.train[0].docs[1].features[0] == 1.0);
  REQUIRE(ds.train[1].docs[0].features[0] == 0.5);
  REQUIRE(ds.train[0].docs[0].features[1] == 0.0);  // constant maps to 0
  REQUIRE(ds.valid[0].docs[0].features[0] == 0.0);  // clipped from below
  REQUIRE(ds.valid[0].docs[1].features[0] == 1.0);  // clipped from above
  REQUIRE(ds.stats.min[0] == 0.0);
  REQUIRE(ds.stats.max[0] == 10.0);
}

TEST_CASE("feature stats sidecar round-trips exactly") {
  const std::string dir = test_util::scratch_dir("stats");
  FeatureStats stats;
  stats.min = {-1.2345678901234567, 0.0, 3.0e-17};
  stats.max = {2.718281828459045, 1.0, 7.0e+11};
  save_feature_stats(dir + "/stats.txt", stats);
  const FeatureStats back = load_feature_stats(dir + "/stats.txt");
  REQUIRE(back.min == stats.min);
  REQUIRE(back.max == stats.max);
}

TEST_CASE("synthetic dataset has fixed split sizes and all grades") {
  const Dataset ds = generate_synthetic_dataset(100, 12, 8, 5);
  REQUIRE(ds.train.size() == 60);
  REQUIRE(ds.valid.size() == 20);
  REQUIRE(ds.test.size() == 20);
  REQUIRE(ds.feature_count == 8);
  std::set<int> grades;
  for (const auto& q : ds.train) {
    REQUIRE(q.docs.size() == 12);
    for (const auto& doc : q.docs) {
      REQUIRE(doc.label >= 0);
      REQUIRE(doc.label <= 4);
      REQUIRE(doc.features.size() == 8);
      grades.insert(doc.label);
    }
  }
  REQUIRE(grades.size() == 5);
}

TEST_CASE("synthetic dataset is deterministic in its seed") {
  const Dataset a = generate_synthetic_dataset(20, 5, 4, 77);
  const Dataset b = generate_synthetic_dataset(20, 5, 4, 77);
  const Dataset c = generate_synthetic_dataset(20, 5, 4, 78);
  REQUIRE(a.train[0].docs[0].features == b.train[0].docs[0].features);
  REQUIRE(a.train[3].docs[2].label == b.train[3].docs[2].label);
  REQUIRE(a.train[0].docs[0].features != c.train[0].docs[0].features);
}

TEST_CASE("synthetic features cluster by grade") {
  const Dataset ds = generate_synthetic_dataset(60, 10, 6, 3);
  // documents of equal grade sit close together; different grades far apart
  std::vector<std::vector<double>> sum(5, std::vector<double>(6, 0.0));
  std::vector<int> count(5, 0);
  for (const auto& q : ds.train) {
    for (const auto& doc : q.docs) {
      for (int f = 0; f < 6; ++f) sum[doc.label][f] += doc.features[f];
      ++count[doc.label];
    }
  }
  for (int g = 0; g < 5; ++g) REQUIRE(count[g] > 0);
  double min_dist = 1e9;
  for (int g = 0; g < 5; ++g) {
    for (int h = g + 1; h < 5; ++h) {
      double d2 = 0.0;
      for (int f = 0; f < 6; ++f) {
        const double diff = sum[g][f] / count[g] - sum[h][f] / count[h];
        d2 += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(d2));
    }
  }
  REQUIRE(min_dist > 0.5);
}
