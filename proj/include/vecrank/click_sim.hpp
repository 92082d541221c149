#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vecrank/data.hpp"
#include "vecrank/rng.hpp"

namespace vecrank {

constexpr int kNumPositions = 10;  // result list is truncated to the top 10
constexpr int kNumGrades = 5;      // relevance grades y = 1..5 (label + 1)

/// Graded relevance mapped to [0, 1]: (2^(y-1) - 1) / (2^(y_max - 1) - 1).
inline double gamma_grade(int y) {
  if (y < 1 || y > kNumGrades) {
    throw std::out_of_range("grade must be in 1..5");
  }
  return (std::pow(2.0, y - 1) - 1.0) / (std::pow(2.0, kNumGrades - 1) - 1.0);
}

/// Position-dependent examination and trust parameters. A user examines
/// position p with probability theta[p], then clicks with probability
/// eps_plus[p] on a relevant document and eps_minus[p] on an irrelevant one.
struct TrustBiasParams {
  std::array<double, kNumPositions> theta;
  std::array<double, kNumPositions> eps_plus;
  std::array<double, kNumPositions> eps_minus;

  static TrustBiasParams defaults() {
    TrustBiasParams p;
    for (int pos = 1; pos <= kNumPositions; ++pos) {
      p.theta[pos - 1] = 1.0 / pos;
      p.eps_plus[pos - 1] = 1.0 - (pos + 1) / 100.0;
      p.eps_minus[pos - 1] = 0.65 / pos;
    }
    return p;
  }
};

/// P(click | position p, grade y) under the trust bias model:
/// theta_p * (eps_plus_p * gamma_y + eps_minus_p * (1 - gamma_y)).
inline double trust_click_prob(const TrustBiasParams& params, int p, int y) {
  if (p < 1 || p > kNumPositions) {
    throw std::out_of_range("position must be in 1..10");
  }
  const double g = gamma_grade(y);
  return params.theta[p - 1] *
         (params.eps_plus[p - 1] * g + params.eps_minus[p - 1] * (1.0 - g));
}

/// P(click | position p, grade y) under the position-based model:
/// theta_p * gamma_y.
inline double pbm_click_prob(const TrustBiasParams& params, int p, int y) {
  if (p < 1 || p > kNumPositions) {
    throw std::out_of_range("position must be in 1..10");
  }
  return params.theta[p - 1] * gamma_grade(y);
}

/// Click rates tabulated per (position, grade). Rows are positions 1..10,
/// columns grades 1..5. Valid matrices have entries in [0, 1] that do not
/// decrease with the grade within a row.
class ClickMatrix {
 public:
  ClickMatrix() { values_.fill(0.0); }

  double rate(int p, int y) const {
    check_indices(p, y);
    return values_[index(p, y)];
  }

  void set_rate(int p, int y, double v) {
    check_indices(p, y);
    values_[index(p, y)] = v;
  }

  void validate() const {
    for (int p = 1; p <= kNumPositions; ++p) {
      for (int y = 1; y <= kNumGrades; ++y) {
        const double v = values_[index(p, y)];
        if (!(v >= 0.0 && v <= 1.0)) {
          throw std::runtime_error(
              "click matrix entry out of [0,1] at position " +
              std::to_string(p) + ", grade " + std::to_string(y));
        }
        if (y > 1 && v < values_[index(p, y - 1)]) {
          throw std::runtime_error(
              "click matrix row " + std::to_string(p) +
              " is not non-decreasing in the grade");
        }
      }
    }
  }

  /// CSV with one row per position and one column per grade.
  std::string to_csv() const {
    std::string out;
    char buf[40];
    for (int p = 1; p <= kNumPositions; ++p) {
      for (int y = 1; y <= kNumGrades; ++y) {
        std::snprintf(buf, sizeof(buf), "%.17g", values_[index(p, y)]);
        out += buf;
        out += (y < kNumGrades) ? ',' : '\n';
      }
    }
    return out;
  }

  static ClickMatrix from_csv(std::istream& in) {
    ClickMatrix m;
    std::string line;
    int p = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++p;
      if (p > kNumPositions) {
        throw std::runtime_error("click matrix csv has more than 10 rows");
      }
      std::istringstream ls(line);
      std::string cell;
      int y = 0;
      while (std::getline(ls, cell, ',')) {
        ++y;
        if (y > kNumGrades) {
          throw std::runtime_error("click matrix csv row " +
                                   std::to_string(p) +
                                   " has more than 5 columns");
        }
        m.values_[index(p, y)] = std::stod(cell);
      }
      if (y != kNumGrades) {
        throw std::runtime_error("click matrix csv row " + std::to_string(p) +
                                 " has fewer than 5 columns");
      }
    }
    if (p != kNumPositions) {
      throw std::runtime_error("click matrix csv has fewer than 10 rows");
    }
    m.validate();
    return m;
  }

  static ClickMatrix load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return from_csv(in);
  }

  void save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_csv();
  }

 private:
  static std::size_t index(int p, int y) {
    return static_cast<std::size_t>(p - 1) * kNumGrades + (y - 1);
  }

  static void check_indices(int p, int y) {
    if (p < 1 || p > kNumPositions) {
      throw std::out_of_range("position must be in 1..10");
    }
    if (y < 1 || y > kNumGrades) {
      throw std::out_of_range("grade must be in 1..5");
    }
  }

  std::array<double, kNumPositions * kNumGrades> values_;
};

/// Built-in stand-in for click rates harvested from a production log: the
/// trust bias rates perturbed by a deterministic per-cell ripple so the
/// matrix has full rank 5. Each row's ripple amplitude is halved until the
/// row is non-decreasing in the grade, then entries are clipped to [0, 1].
inline ClickMatrix default_real_click_matrix() {
  const TrustBiasParams trust = TrustBiasParams::defaults();
  ClickMatrix m;
  for (int p = 1; p <= kNumPositions; ++p) {
    double amp = 0.1;
    for (;;) {
      bool monotone = true;
      double prev = -1.0;
      for (int y = 1; y <= kNumGrades; ++y) {
        const double z = ((31 * p + 17 * y) % 7) / 7.0 - 0.5;
        const double v = std::clamp(
            trust_click_prob(trust, p, y) * (1.0 + amp * z), 0.0, 1.0);
        if (v < prev) {
          monotone = false;
          break;
        }
        prev = v;
        m.set_rate(p, y, v);
      }
      if (monotone) break;
      amp *= 0.5;
    }
  }
  m.validate();
  return m;
}

enum class ClickSetting { kRealMatrix, kTrustBias, kPbm };

inline const char* to_string(ClickSetting s) {
  switch (s) {
    case ClickSetting::kRealMatrix: return "real_matrix";
    case ClickSetting::kTrustBias: return "trust_bias";
    case ClickSetting::kPbm: return "pbm";
  }
  throw std::logic_error("unknown click setting");
}

inline ClickSetting click_setting_from_string(const std::string& s) {
  if (s == "real_matrix") return ClickSetting::kRealMatrix;
  if (s == "trust_bias") return ClickSetting::kTrustBias;
  if (s == "pbm") return ClickSetting::kPbm;
  throw std::runtime_error("unknown click setting '" + s + "'");
}

/// Which generative click model drives the simulator.
struct ClickModelSpec {
  ClickSetting setting = ClickSetting::kRealMatrix;
  ClickMatrix matrix = default_real_click_matrix();
  TrustBiasParams trust = TrustBiasParams::defaults();

  double click_rate(int p, int y) const {
    switch (setting) {
      case ClickSetting::kRealMatrix: return matrix.rate(p, y);
      case ClickSetting::kTrustBias: return trust_click_prob(trust, p, y);
      case ClickSetting::kPbm: return pbm_click_prob(trust, p, y);
    }
    throw std::logic_error("unknown click setting");
  }

  /// The 10 x 5 rate table this model induces, whatever its setting.
  ClickMatrix implied_matrix() const {
    ClickMatrix m;
    for (int p = 1; p <= kNumPositions; ++p) {
      for (int y = 1; y <= kNumGrades; ++y) {
        m.set_rate(p, y, click_rate(p, y));
      }
    }
    return m;
  }
};

/// Linear scorer that stands in for a deployed production ranker.
struct InitialRanker {
  std::vector<double> weights;

  double score(const std::vector<double>& features) const {
    double s = 0.0;
    for (std::size_t f = 0; f < weights.size(); ++f) {
      s += weights[f] * features[f];
    }
    return s;
  }
};

/// Fits the initial ranker by full-batch gradient descent on the pairwise
/// logistic loss over discordant document pairs, using only the first
/// ceil(fraction * |queries|) training queries. The weak supervision is
/// intentional: it mimics a mediocre deployed ranker.
inline InitialRanker train_initial_ranker(const std::vector<QueryList>& train,
                                          int feature_count, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("initial ranker fraction must be in (0, 1]");
  }
  const std::size_t n_queries = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * train.size())));
  if (train.empty()) {
    throw std::runtime_error("initial ranker needs training queries");
  }

  struct Pair {
    const std::vector<double>* hi;
    const std::vector<double>* lo;
  };
  std::vector<Pair> pairs;
  for (std::size_t qi = 0; qi < std::min(n_queries, train.size()); ++qi) {
    const auto& docs = train[qi].docs;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      for (std::size_t j = 0; j < docs.size(); ++j) {
        if (docs[i].label > docs[j].label) {
          pairs.push_back({&docs[i].features, &docs[j].features});
        }
      }
    }
  }
  if (pairs.empty()) {
    throw std::runtime_error(
        "initial ranker training data has no discordant pairs");
  }

  InitialRanker ranker;
  ranker.weights.assign(feature_count, 0.0);
  constexpr int kIters = 200;
  constexpr double kLr = 0.5;
  std::vector<double> grad(feature_count);
  for (int it = 0; it < kIters; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& pr : pairs) {
      double margin = 0.0;
      for (int f = 0; f < feature_count; ++f) {
        margin += ranker.weights[f] * ((*pr.hi)[f] - (*pr.lo)[f]);
      }
      const double coeff = -1.0 / (1.0 + std::exp(margin));
      for (int f = 0; f < feature_count; ++f) {
        grad[f] += coeff * ((*pr.hi)[f] - (*pr.lo)[f]);
      }
    }
    for (int f = 0; f < feature_count; ++f) {
      ranker.weights[f] -= kLr * grad[f] / static_cast<double>(pairs.size());
    }
  }
  return ranker;
}

/// One result slot shown to the simulated user.
struct DisplayItem {
  int doc_index;  // index into QueryList::docs
  int position;   // 1-based rank on the result page
};

/// Sorts a query's documents by ranker score (stable, descending) and keeps
/// the top `kNumPositions` slots.
inline std::vector<DisplayItem> display_order(const QueryList& query,
                                              const InitialRanker& ranker) {
  std::vector<int> order(query.docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(query.docs.size());
  for (std::size_t i = 0; i < query.docs.size(); ++i) {
    scores[i] = ranker.score(query.docs[i].features);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  const std::size_t n = std::min<std::size_t>(order.size(), kNumPositions);
  std::vector<DisplayItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    items.push_back({order[i], static_cast<int>(i) + 1});
  }
  return items;
}

/// One simulated session: which displayed documents were clicked.
struct ClickLog {
  std::int64_t qid = 0;
  struct Item {
    int doc_index;
    int position;
    bool click;
  };
  std::vector<Item> items;
};

/// Draws Bernoulli clicks for one session over the displayed list.
inline ClickLog sample_clicks(const ClickModelSpec& spec,
                              const QueryList& query,
                              const std::vector<DisplayItem>& display,
                              Rng& rng) {
  ClickLog log;
  log.qid = query.qid;
  log.items.reserve(display.size());
  for (const auto& slot : display) {
    const int y = query.docs[slot.doc_index].label + 1;
    const double rate = spec.click_rate(slot.position, y);
    log.items.push_back({slot.doc_index, slot.position, rng.bernoulli(rate)});
  }
  return log;
}

/// Pre-generates `sessions_per_query` click logs for every query, for
/// training from a frozen log instead of on-the-fly sampling.
inline std::vector<ClickLog> generate_click_logs(
    const ClickModelSpec& spec, const std::vector<QueryList>& queries,
    const InitialRanker& ranker, int sessions_per_query, Rng& rng) {
  std::vector<ClickLog> logs;
  logs.reserve(queries.size() * sessions_per_query);
  for (const auto& q : queries) {
    const auto display = display_order(q, ranker);
    for (int s = 0; s < sessions_per_query; ++s) {
      logs.push_back(sample_clicks(spec, q, display, rng));
    }
  }
  return logs;
}

/// One JSON object per line: qid, displayed doc indices, their positions,
/// and the 0/1 click outcomes.
inline void save_click_logs_jsonl(const std::string& path,
                                  const std::vector<ClickLog>& logs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& log : logs) {
    nlohmann::json j;
    j["qid"] = log.qid;
    auto& docs = j["docs"] = nlohmann::json::array();
    auto& positions = j["positions"] = nlohmann::json::array();
    auto& clicks = j["clicks"] = nlohmann::json::array();
    for (const auto& item : log.items) {
      docs.push_back(item.doc_index);
      positions.push_back(item.position);
      clicks.push_back(item.click ? 1 : 0);
    }
    out << j.dump() << '\n';
  }
}

inline std::vector<ClickLog> load_click_logs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<ClickLog> logs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ClickLog log;
    log.qid = j.at("qid").get<std::int64_t>();
    const auto& docs = j.at("docs");
    const auto& positions = j.at("positions");
    const auto& clicks = j.at("clicks");
    if (docs.size() != positions.size() || docs.size() != clicks.size()) {
      throw std::runtime_error("click log line with mismatched array sizes");
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
      log.items.push_back({docs[i].get<int>(), positions[i].get<int>(),
                           clicks[i].get<int>() != 0});
    }
    logs.push_back(std::move(log));
  }
  return logs;
}

}  // namespace vecrank
