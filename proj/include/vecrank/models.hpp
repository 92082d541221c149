#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vecrank/click_sim.hpp"
#include "vecrank/nn.hpp"
#include "vecrank/rng.hpp"

namespace vecrank {

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Maps document features to a d-dimensional relevance embedding r(x).
struct RelevanceModel {
  Mlp net;  // feature_count -> hidden... -> d

  int dim() const { return net.output_size(); }

  std::vector<double> embed(std::span<const double> features,
                            Mlp::Trace* trace = nullptr) const {
    return net.forward(features, trace);
  }

  static RelevanceModel create(int feature_count,
                               const std::vector<int>& hidden, int dim,
                               Rng& rng) {
    std::vector<int> sizes;
    sizes.push_back(feature_count);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(dim);
    return RelevanceModel{Mlp::create(sizes, rng)};
  }
};

/// Maps a display position to a d-dimensional observation embedding o(t).
/// Positions key a plain lookup table since only `kNumPositions` distinct
/// values ever occur.
struct ObservationModel {
  int dim = 0;
  std::vector<double> table;  // kNumPositions x dim, row-major

  std::span<const double> embedding(int position) const {
    check(position);
    return {table.data() + static_cast<std::size_t>(position - 1) * dim,
            static_cast<std::size_t>(dim)};
  }

  std::span<double> embedding(int position) {
    check(position);
    return {table.data() + static_cast<std::size_t>(position - 1) * dim,
            static_cast<std::size_t>(dim)};
  }

  /// Starts every position at the all-ones embedding, the observation-blind
  /// configuration, so training only moves rows apart when clicks demand it.
  /// A random start instead leaves some seeds in basins where rows point in
  /// mixed directions and the relevance network compensates badly.
  static ObservationModel create(int dim, Rng& rng) {
    ObservationModel m;
    m.dim = dim;
    m.table.resize(static_cast<std::size_t>(kNumPositions) * dim);
    const double jitter = 0.01;
    for (auto& v : m.table) v = 1.0 + rng.uniform(-jitter, jitter);
    return m;
  }

  /// All-ones embeddings reduce the click score to sum_k r_k(x), the
  /// observation-blind model used as the naive baseline.
  static ObservationModel ones(int dim) {
    ObservationModel m;
    m.dim = dim;
    m.table.assign(static_cast<std::size_t>(kNumPositions) * dim, 1.0);
    return m;
  }

 private:
  void check(int position) const {
    if (position < 1 || position > kNumPositions) {
      throw std::out_of_range("position must be in 1..10");
    }
  }
};

/// Predicted click rate for a (document, position) pair: r(x) . o(t).
inline double click_score(std::span<const double> relevance,
                          std::span<const double> observation) {
  return dot(relevance, observation);
}

/// Per-coordinate Gaussian over a document's relevance embedding, produced
/// by the base model. Variance is carried as s = log sigma^2.
struct GaussianEstimate {
  std::vector<double> mu;
  std::vector<double> log_var;

  double variance(int k) const { return std::exp(log_var[k]); }
};

/// Predicts (mu, log sigma^2) of the relevance embedding from features; the
/// network emits 2d outputs, mean first. Log-variances are clamped to
/// [-10, 10] to keep 1/sigma^2 finite.
struct BaseModel {
  Mlp net;  // feature_count -> hidden... -> 2d

  int dim() const { return net.output_size() / 2; }

  static BaseModel create(int feature_count, const std::vector<int>& hidden,
                          int dim, Rng& rng) {
    std::vector<int> sizes;
    sizes.push_back(feature_count);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * dim);
    return BaseModel{Mlp::create(sizes, rng)};
  }
};

inline GaussianEstimate predict_gaussian(const BaseModel& model,
                                         std::span<const double> features,
                                         Mlp::Trace* trace = nullptr) {
  const std::vector<double> out = model.net.forward(features, trace);
  const int d = model.dim();
  GaussianEstimate est;
  est.mu.assign(out.begin(), out.begin() + d);
  est.log_var.resize(d);
  for (int k = 0; k < d; ++k) {
    est.log_var[k] = std::clamp(out[d + k], kLogVarMin, kLogVarMax);
  }
  return est;
}

/// Exact d = 2 factorization of the trust bias model. With
/// r(x) = [gamma_y, 1] and o(p) = theta_p * [eps_plus_p - eps_minus_p,
/// eps_minus_p], the dot product reproduces the trust bias click rate, and
/// projecting onto the base vector [1, 0] recovers gamma_y.
struct TrustBiasEmbeddings {
  std::vector<std::vector<double>> relevance;    // indexed by grade y - 1
  std::vector<std::vector<double>> observation;  // indexed by position p - 1
  std::vector<double> base_vector;               // [1, 0]
};

inline TrustBiasEmbeddings trust_bias_embeddings(
    const TrustBiasParams& params) {
  TrustBiasEmbeddings e;
  e.relevance.resize(kNumGrades);
  for (int y = 1; y <= kNumGrades; ++y) {
    e.relevance[y - 1] = {gamma_grade(y), 1.0};
  }
  e.observation.resize(kNumPositions);
  for (int p = 1; p <= kNumPositions; ++p) {
    const double theta = params.theta[p - 1];
    const double plus = params.eps_plus[p - 1];
    const double minus = params.eps_minus[p - 1];
    e.observation[p - 1] = {theta * (plus - minus), theta * minus};
  }
  e.base_vector = {1.0, 0.0};
  return e;
}

/// JSON sidecar describing a saved model trio so checkpoints can be reloaded
/// without the training config.
struct CheckpointManifest {
  int feature_count = 0;
  int dim = 0;
  int positions = kNumPositions;
  std::vector<int> hidden;

  void save(const std::string& path) const {
    nlohmann::json j;
    j["feature_count"] = feature_count;
    j["dim"] = dim;
    j["positions"] = positions;
    j["hidden"] = hidden;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
  }

  static CheckpointManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    const auto j = nlohmann::json::parse(in);
    CheckpointManifest m;
    m.feature_count = j.at("feature_count").get<int>();
    m.dim = j.at("dim").get<int>();
    m.positions = j.at("positions").get<int>();
    m.hidden = j.at("hidden").get<std::vector<int>>();
    return m;
  }
};

inline void save_observation_model(const std::string& path,
                                   const ObservationModel& model) {
  save_table(path, kNumPositions, model.dim, model.table);
}

inline ObservationModel load_observation_model(const std::string& path) {
  ObservationModel m;
  int rows = 0;
  m.table = load_table(path, rows, m.dim);
  if (rows != kNumPositions) {
    throw std::runtime_error(path + " does not hold 10 position embeddings");
  }
  return m;
}

}  // namespace vecrank
