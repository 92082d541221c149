#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vecrank/rng.hpp"

namespace vecrank {

constexpr int kMaxLabel = 4;  // relevance grades are 0..4 (y_max = 5 levels)

struct Document {
  std::int64_t qid = 0;
  int label = 0;
  std::vector<double> features;
};

struct QueryList {
  std::int64_t qid = 0;
  std::vector<Document> docs;
};

/// Per-feature (min, max) computed on the training split.
struct FeatureStats {
  std::vector<double> min;
  std::vector<double> max;

  bool empty() const { return min.empty(); }
};

struct Dataset {
  std::vector<QueryList> train;
  std::vector<QueryList> valid;
  std::vector<QueryList> test;
  int feature_count = 0;
  FeatureStats stats;  // filled by normalize()
};

namespace detail {

inline long long parse_int_token(const std::string& tok, int line_no,
                                 const char* what) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || tok.empty()) {
    throw std::runtime_error("letor parse error at line " +
                             std::to_string(line_no) + ": bad " + what + " '" +
                             tok + "'");
  }
  return v;
}

inline double parse_double_token(const std::string& tok, int line_no,
                                 const char* what) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || tok.empty()) {
    throw std::runtime_error("letor parse error at line " +
                             std::to_string(line_no) + ": bad " + what + " '" +
                             tok + "'");
  }
  return v;
}

}  // namespace detail

/// Parses LETOR/SVMlight lines `<label> qid:<qid> <fid>:<val> ...` into query
/// lists. Documents are grouped by qid in first-appearance order; file order
/// is preserved within a query. Feature ids are 1-based; ids absent from a
/// line default to 0. When `feature_count` is 0 the width is inferred from
/// the largest feature id seen.
inline std::vector<QueryList> parse_letor(std::istream& in,
                                          int feature_count = 0) {
  struct Row {
    std::int64_t qid;
    int label;
    std::vector<std::pair<int, double>> feats;
  };
  std::vector<Row> rows;
  int max_fid = 0;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank or comment-only line

    Row row;
    const long long label = detail::parse_int_token(tok, line_no, "label");
    if (label < 0 || label > kMaxLabel) {
      throw std::runtime_error("letor range error at line " +
                               std::to_string(line_no) + ": label " +
                               std::to_string(label) + " outside [0, " +
                               std::to_string(kMaxLabel) + "]");
    }
    row.label = static_cast<int>(label);

    if (!(ls >> tok) || tok.rfind("qid:", 0) != 0) {
      throw std::runtime_error("letor parse error at line " +
                               std::to_string(line_no) +
                               ": expected qid:<id>");
    }
    row.qid = detail::parse_int_token(tok.substr(4), line_no, "qid");

    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 ||
          colon + 1 == tok.size()) {
        throw std::runtime_error("letor parse error at line " +
                                 std::to_string(line_no) +
                                 ": expected <fid>:<val>, got '" + tok + "'");
      }
      const long long fid =
          detail::parse_int_token(tok.substr(0, colon), line_no, "feature id");
      const double val =
          detail::parse_double_token(tok.substr(colon + 1), line_no, "value");
      if (fid < 1) {
        throw std::runtime_error("letor parse error at line " +
                                 std::to_string(line_no) +
                                 ": feature ids are 1-based");
      }
      if (feature_count > 0 && fid > feature_count) {
        throw std::runtime_error("letor parse error at line " +
                                 std::to_string(line_no) + ": feature id " +
                                 std::to_string(fid) + " exceeds declared " +
                                 std::to_string(feature_count));
      }
      for (const auto& [seen, _] : row.feats) {
        if (seen == fid) {
          throw std::runtime_error("letor parse error at line " +
                                   std::to_string(line_no) +
                                   ": duplicate feature id " +
                                   std::to_string(fid));
        }
      }
      row.feats.emplace_back(static_cast<int>(fid), val);
      max_fid = std::max<int>(max_fid, static_cast<int>(fid));
    }
    rows.push_back(std::move(row));
  }

  const int width = feature_count > 0 ? feature_count : max_fid;
  std::vector<QueryList> queries;
  std::map<std::int64_t, std::size_t> index_of;
  for (auto& row : rows) {
    Document doc;
    doc.qid = row.qid;
    doc.label = row.label;
    doc.features.assign(width, 0.0);
    for (const auto& [fid, val] : row.feats) doc.features[fid - 1] = val;
    auto it = index_of.find(row.qid);
    if (it == index_of.end()) {
      it = index_of.emplace(row.qid, queries.size()).first;
      queries.push_back(QueryList{row.qid, {}});
    }
    queries[it->second].docs.push_back(std::move(doc));
  }
  return queries;
}

/// Inverse of parse_letor; feature values are written with enough digits to
/// round-trip doubles exactly.
inline std::string serialize_letor(const std::vector<QueryList>& queries) {
  std::string out;
  char buf[64];
  for (const auto& q : queries) {
    for (const auto& doc : q.docs) {
      out += std::to_string(doc.label);
      out += " qid:";
      out += std::to_string(doc.qid);
      for (std::size_t f = 0; f < doc.features.size(); ++f) {
        std::snprintf(buf, sizeof(buf), " %zu:%.17g", f + 1, doc.features[f]);
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

namespace detail {

inline double rescale(double v, double lo, double hi, bool clip) {
  double r = (hi == lo) ? 0.0 : (v - lo) / (hi - lo);
  if (clip) r = std::clamp(r, 0.0, 1.0);
  return r;
}

}  // namespace detail

/// Computes per-feature (min, max) over every document of the given split.
inline FeatureStats compute_feature_stats(const std::vector<QueryList>& split,
                                          int feature_count) {
  FeatureStats stats;
  stats.min.assign(feature_count, 0.0);
  stats.max.assign(feature_count, 0.0);
  bool first = true;
  for (const auto& q : split) {
    for (const auto& doc : q.docs) {
      for (int f = 0; f < feature_count; ++f) {
        const double v = doc.features[f];
        if (first) {
          stats.min[f] = stats.max[f] = v;
        } else {
          stats.min[f] = std::min(stats.min[f], v);
          stats.max[f] = std::max(stats.max[f], v);
        }
      }
      first = false;
    }
  }
  if (first) throw std::runtime_error("cannot compute stats of empty split");
  return stats;
}

/// Min-max rescale of a split with fixed stats. `clip` keeps values in [0,1]
/// and is meant for splits the stats were not computed on.
inline void apply_feature_stats(std::vector<QueryList>& split,
                                const FeatureStats& stats, bool clip) {
  for (auto& q : split) {
    for (auto& doc : q.docs) {
      for (std::size_t f = 0; f < doc.features.size(); ++f) {
        doc.features[f] =
            detail::rescale(doc.features[f], stats.min[f], stats.max[f], clip);
      }
    }
  }
}

/// Min-max normalization using training-split statistics only. Constant
/// features map to 0; valid/test values are clipped to [0, 1].
inline Dataset normalize(Dataset ds) {
  if (ds.train.empty()) {
    throw std::runtime_error("normalize requires a non-empty training split");
  }
  ds.stats = compute_feature_stats(ds.train, ds.feature_count);
  apply_feature_stats(ds.train, ds.stats, /*clip=*/false);
  apply_feature_stats(ds.valid, ds.stats, /*clip=*/true);
  apply_feature_stats(ds.test, ds.stats, /*clip=*/true);
  return ds;
}

/// Text sidecar with one `fid min max` line per feature, written so that an
/// inference run reloads the training statistics bit-exactly.
inline void save_feature_stats(const std::string& path,
                               const FeatureStats& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[96];
  for (std::size_t f = 0; f < stats.min.size(); ++f) {
    std::snprintf(buf, sizeof(buf), "%zu %.17g %.17g\n", f + 1, stats.min[f],
                  stats.max[f]);
    out << buf;
  }
}

inline FeatureStats load_feature_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  FeatureStats stats;
  std::size_t fid;
  double lo, hi;
  while (in >> fid >> lo >> hi) {
    if (fid != stats.min.size() + 1) {
      throw std::runtime_error("feature stats file " + path +
                               " has out-of-order feature ids");
    }
    stats.min.push_back(lo);
    stats.max.push_back(hi);
  }
  return stats;
}

/// Synthetic ranking data: five Gaussian clusters in feature space, one per
/// relevance grade. `noise_sigma` sets the per-feature scatter around the
/// cluster mean and thus how separable the grades are; around 0.4 an MLP can
/// recover the grade almost perfectly, around 1.5 grades overlap enough that
/// ranking quality depends on how efficiently a method uses the click signal.
/// Deterministic in `seed`; the split over queries is a fixed 60/20/20; every
/// grade 0..4 is guaranteed to occur.
inline Dataset generate_synthetic_dataset(int num_queries, int docs_per_query,
                                          int feature_count, std::uint64_t seed,
                                          double noise_sigma = 0.4) {
  if (num_queries <= 0 || docs_per_query <= 0 || feature_count <= 0) {
    throw std::invalid_argument("synthetic dataset sizes must be positive");
  }
  if (!(noise_sigma >= 0.0)) {
    throw std::invalid_argument("synthetic noise sigma must be >= 0");
  }
  Rng rng(derive_seed(seed, 0x5d0a7au));

  std::vector<std::vector<double>> grade_mean(kMaxLabel + 1);
  for (auto& mean : grade_mean) {
    mean.resize(feature_count);
    for (auto& m : mean) m = rng.gaussian();
  }

  Dataset ds;
  ds.feature_count = feature_count;
  const int n_train = std::max(1, (num_queries * 6) / 10);
  const int n_valid = std::max(0, (num_queries * 2) / 10);
  for (int qi = 0; qi < num_queries; ++qi) {
    QueryList q;
    q.qid = qi + 1;
    for (int di = 0; di < docs_per_query; ++di) {
      Document doc;
      doc.qid = q.qid;
      // First query pins one document per grade so all five grades occur.
      doc.label = (qi == 0 && di <= kMaxLabel) ? di
                                               : rng.uniform_int(kMaxLabel + 1);
      doc.features.resize(feature_count);
      for (int f = 0; f < feature_count; ++f) {
        doc.features[f] =
            grade_mean[doc.label][f] + noise_sigma * rng.gaussian();
      }
      q.docs.push_back(std::move(doc));
    }
    if (qi < n_train) {
      ds.train.push_back(std::move(q));
    } else if (qi < n_train + n_valid) {
      ds.valid.push_back(std::move(q));
    } else {
      ds.test.push_back(std::move(q));
    }
  }
  return ds;
}

}  // namespace vecrank
