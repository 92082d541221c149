#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vecrank/click_sim.hpp"
#include "vecrank/data.hpp"
#include "vecrank/eval.hpp"
#include "vecrank/models.hpp"
#include "vecrank/rng.hpp"
#include "vecrank/trainer.hpp"

namespace vecrank {

inline const std::vector<int> kReportCutoffs = {1, 3, 5, 10};

enum class Method {
  kVectorization,   // two-stage training, learned observation table
  kScalarD1,        // same with the embedding dimension forced to 1
  kNaiveClick,      // observation table frozen to ones (clicks as relevance)
  kLabeledOracle,   // scalar scorer trained on the true labels
  kAnalyticTrust,   // closed-form grade projection, no training
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kVectorization: return "vectorization";
    case Method::kScalarD1: return "scalar_d1";
    case Method::kNaiveClick: return "naive_click";
    case Method::kLabeledOracle: return "labeled_oracle";
    case Method::kAnalyticTrust: return "analytic_trust";
  }
  throw std::logic_error("unknown method");
}

inline Method method_from_string(const std::string& s) {
  if (s == "vectorization") return Method::kVectorization;
  if (s == "scalar_d1") return Method::kScalarD1;
  if (s == "naive_click") return Method::kNaiveClick;
  if (s == "labeled_oracle") return Method::kLabeledOracle;
  if (s == "analytic_trust") return Method::kAnalyticTrust;
  throw std::runtime_error("unknown method '" + s + "'");
}

struct SyntheticSpec {
  int num_queries = 200;
  int docs_per_query = 15;
  int feature_count = 20;
  std::uint64_t seed = 7;
  double noise_sigma = 0.4;
};

struct LetorSpec {
  std::string train;
  std::string valid;
  std::string test;
  int feature_count = 0;  // 0 infers the width from the train file
};

struct DatasetSpec {
  bool synthetic = true;
  SyntheticSpec synth;
  LetorSpec letor;
};

struct ClicksSpec {
  ClickSetting setting = ClickSetting::kRealMatrix;
  std::string matrix_csv;  // optional override for the real_matrix setting
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ClicksSpec clicks;
  Method method = Method::kVectorization;
  TrainConfig train;
  double initial_ranker_fraction = 0.01;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "out";
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<const char*> allowed,
                           const char* context) {
  if (!j.is_object()) {
    throw std::runtime_error(std::string("config section '") + context +
                             "' must be a JSON object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::runtime_error("unknown config key '" + it.key() + "' in " +
                               context);
    }
  }
}

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

/// Strict parse: every key must be known, sections are optional and fall
/// back to defaults.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"dataset", "clicks", "method", "train",
                          "initial_ranker", "seeds", "out_dir"},
                         "config");
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::reject_unknown(d, {"synthetic", "letor"}, "dataset");
    if (d.contains("synthetic") && d.contains("letor")) {
      throw std::runtime_error(
          "config dataset must be synthetic or letor, not both");
    }
    if (d.contains("letor")) {
      const auto& l = d.at("letor");
      detail::reject_unknown(l, {"train", "valid", "test", "feature_count"},
                             "dataset.letor");
      cfg.dataset.synthetic = false;
      cfg.dataset.letor.train = l.at("train").get<std::string>();
      cfg.dataset.letor.valid = l.at("valid").get<std::string>();
      cfg.dataset.letor.test = l.at("test").get<std::string>();
      detail::maybe_get(l, "feature_count", cfg.dataset.letor.feature_count);
    } else if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      detail::reject_unknown(s,
                             {"num_queries", "docs_per_query", "feature_count",
                              "seed", "noise_sigma"},
                             "dataset.synthetic");
      detail::maybe_get(s, "num_queries", cfg.dataset.synth.num_queries);
      detail::maybe_get(s, "docs_per_query", cfg.dataset.synth.docs_per_query);
      detail::maybe_get(s, "feature_count", cfg.dataset.synth.feature_count);
      detail::maybe_get(s, "seed", cfg.dataset.synth.seed);
      detail::maybe_get(s, "noise_sigma", cfg.dataset.synth.noise_sigma);
    }
  }
  if (j.contains("clicks")) {
    const auto& c = j.at("clicks");
    detail::reject_unknown(c, {"setting", "matrix_csv"}, "clicks");
    if (c.contains("setting")) {
      cfg.clicks.setting =
          click_setting_from_string(c.at("setting").get<std::string>());
    }
    detail::maybe_get(c, "matrix_csv", cfg.clicks.matrix_csv);
  }
  if (j.contains("method")) {
    cfg.method = method_from_string(j.at("method").get<std::string>());
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(
        t,
        {"learning_rate", "batch_size", "l2_lambda", "dim", "hidden",
         "stage1_epochs", "stage2_epochs", "valid_cadence", "resample_clicks",
         "sessions_per_query", "eval_k"},
        "train");
    detail::maybe_get(t, "learning_rate", cfg.train.learning_rate);
    detail::maybe_get(t, "batch_size", cfg.train.batch_size);
    detail::maybe_get(t, "l2_lambda", cfg.train.l2_lambda);
    detail::maybe_get(t, "dim", cfg.train.dim);
    detail::maybe_get(t, "hidden", cfg.train.hidden);
    detail::maybe_get(t, "stage1_epochs", cfg.train.stage1_epochs);
    detail::maybe_get(t, "stage2_epochs", cfg.train.stage2_epochs);
    detail::maybe_get(t, "valid_cadence", cfg.train.valid_cadence);
    detail::maybe_get(t, "resample_clicks", cfg.train.resample_clicks);
    detail::maybe_get(t, "sessions_per_query", cfg.train.sessions_per_query);
    detail::maybe_get(t, "eval_k", cfg.train.eval_k);
  }
  if (j.contains("initial_ranker")) {
    const auto& r = j.at("initial_ranker");
    detail::reject_unknown(r, {"fraction"}, "initial_ranker");
    detail::maybe_get(r, "fraction", cfg.initial_ranker_fraction);
  }
  detail::maybe_get(j, "seeds", cfg.seeds);
  detail::maybe_get(j, "out_dir", cfg.out_dir);
  if (cfg.seeds.empty()) throw std::runtime_error("config needs >= 1 seed");
  if (cfg.train.dim < 1) throw std::runtime_error("train.dim must be >= 1");
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return parse_experiment_config(nlohmann::json::parse(in));
}

/// Canonical echo of a config with every default materialized. Key order is
/// fixed by the JSON library, so the dump doubles as the digest input.
inline nlohmann::json canonical_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  if (cfg.dataset.synthetic) {
    j["dataset"]["synthetic"] = {
        {"num_queries", cfg.dataset.synth.num_queries},
        {"docs_per_query", cfg.dataset.synth.docs_per_query},
        {"feature_count", cfg.dataset.synth.feature_count},
        {"seed", cfg.dataset.synth.seed},
        {"noise_sigma", cfg.dataset.synth.noise_sigma}};
  } else {
    j["dataset"]["letor"] = {{"train", cfg.dataset.letor.train},
                             {"valid", cfg.dataset.letor.valid},
                             {"test", cfg.dataset.letor.test},
                             {"feature_count", cfg.dataset.letor.feature_count}};
  }
  j["clicks"] = {{"setting", to_string(cfg.clicks.setting)},
                 {"matrix_csv", cfg.clicks.matrix_csv}};
  j["method"] = to_string(cfg.method);
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"l2_lambda", cfg.train.l2_lambda},
                {"dim", cfg.train.dim},
                {"hidden", cfg.train.hidden},
                {"stage1_epochs", cfg.train.stage1_epochs},
                {"stage2_epochs", cfg.train.stage2_epochs},
                {"valid_cadence", cfg.train.valid_cadence},
                {"resample_clicks", cfg.train.resample_clicks},
                {"sessions_per_query", cfg.train.sessions_per_query},
                {"eval_k", cfg.train.eval_k}};
  j["initial_ranker"] = {{"fraction", cfg.initial_ranker_fraction}};
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  return j;
}

inline std::string config_digest(const ExperimentConfig& cfg) {
  return detail::fnv1a_hex(canonical_json(cfg).dump());
}

inline Dataset build_dataset(const DatasetSpec& spec) {
  if (spec.synthetic) {
    return generate_synthetic_dataset(
        spec.synth.num_queries, spec.synth.docs_per_query,
        spec.synth.feature_count, spec.synth.seed, spec.synth.noise_sigma);
  }
  const auto read_split = [&](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return parse_letor(in, spec.letor.feature_count);
  };
  Dataset ds;
  ds.train = read_split(spec.letor.train);
  ds.valid = read_split(spec.letor.valid);
  ds.test = read_split(spec.letor.test);
  int width = spec.letor.feature_count;
  if (width == 0) {
    for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
      for (const auto& q : *split) {
        for (const auto& doc : q.docs) {
          width = std::max(width, static_cast<int>(doc.features.size()));
        }
      }
    }
    for (auto* split : {&ds.train, &ds.valid, &ds.test}) {
      for (auto& q : *split) {
        for (auto& doc : q.docs) doc.features.resize(width, 0.0);
      }
    }
  }
  ds.feature_count = width;
  return ds;
}

inline ClickModelSpec build_click_spec(const ClicksSpec& spec) {
  ClickModelSpec out;
  out.setting = spec.setting;
  if (spec.setting == ClickSetting::kRealMatrix && !spec.matrix_csv.empty()) {
    out.matrix = ClickMatrix::load_csv(spec.matrix_csv);
  }
  return out;
}

/// Dataset, production ranker and click model shared by every seed of a run.
struct Prepared {
  Dataset data;
  InitialRanker ranker;
  ClickModelSpec clicks;
};

inline Prepared prepare(const ExperimentConfig& cfg) {
  Prepared prep;
  prep.data = normalize(build_dataset(cfg.dataset));
  prep.ranker = train_initial_ranker(prep.data.train, prep.data.feature_count,
                                     cfg.initial_ranker_fraction);
  prep.clicks = build_click_spec(cfg.clicks);
  return prep;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::map<int, double> test_ndcg;  // cutoff -> mean over test queries
  double best_valid_ndcg = 0.0;
  double wall_ms = 0.0;
};

struct MethodRun {
  Method method = Method::kVectorization;
  SeedOutcome outcome;
  RelevanceModel relevance;
  ObservationModel observation;
  BaseModel base;
  Mlp oracle;
  std::vector<EpochRecord> report;
  std::vector<RankedList> ranked_test;
};

namespace detail {

inline RankedList rank_by_oracle(const Mlp& net, const QueryList& q) {
  RankedList out;
  out.qid = q.qid;
  out.scores.resize(q.docs.size());
  for (std::size_t i = 0; i < q.docs.size(); ++i) {
    out.scores[i] = net.forward(q.docs[i].features)[0];
  }
  out.order = rank_by_score(out.scores);
  return out;
}

inline RankedList rank_by_grade(const QueryList& q) {
  RankedList out;
  out.qid = q.qid;
  out.scores.resize(q.docs.size());
  for (std::size_t i = 0; i < q.docs.size(); ++i) {
    out.scores[i] = gamma_grade(q.docs[i].label + 1);
  }
  out.order = rank_by_score(out.scores);
  return out;
}

}  // namespace detail

/// Trains one method for one seed and evaluates it on the test split. All
/// randomness flows from a single stream derived from (seed, method), so a
/// rerun with the same inputs is bit-identical.
inline MethodRun run_method_seed(const Prepared& prep, Method method,
                                 TrainConfig tcfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  MethodRun run;
  run.method = method;
  run.outcome.seed = seed;
  if (method == Method::kScalarD1) tcfg.dim = 1;
  Rng rng(derive_seed(seed, 0x6d000000u + static_cast<unsigned>(method)));

  switch (method) {
    case Method::kVectorization:
    case Method::kScalarD1:
    case Method::kNaiveClick: {
      const bool freeze = method == Method::kNaiveClick;
      Stage1Result s1 =
          train_stage1(prep.data, prep.clicks, prep.ranker, tcfg, freeze, rng);
      Stage2Result s2 = train_stage2(prep.data, s1.relevance, s1.observation,
                                     prep.ranker, tcfg, rng);
      run.relevance = std::move(s1.relevance);
      run.observation = std::move(s1.observation);
      run.base = std::move(s2.base);
      run.report = std::move(s1.report);
      run.report.insert(run.report.end(), s2.report.begin(), s2.report.end());
      run.outcome.best_valid_ndcg = s2.best_valid_ndcg;
      for (const auto& q : prep.data.test) {
        run.ranked_test.push_back(infer_ranking(run.relevance, run.base, q));
      }
      break;
    }
    case Method::kLabeledOracle: {
      OracleResult or_ = train_labeled_oracle(prep.data, tcfg, rng);
      run.oracle = std::move(or_.net);
      run.report = std::move(or_.report);
      run.outcome.best_valid_ndcg = or_.best_valid_ndcg;
      for (const auto& q : prep.data.test) {
        run.ranked_test.push_back(detail::rank_by_oracle(run.oracle, q));
      }
      break;
    }
    case Method::kAnalyticTrust: {
      std::vector<double> valid_scores;
      for (const auto& q : prep.data.valid) {
        const RankedList r = detail::rank_by_grade(q);
        valid_scores.push_back(ndcg_of_ranking(q, r.order, tcfg.eval_k));
      }
      run.outcome.best_valid_ndcg =
          valid_scores.empty() ? 0.0 : mean_std(valid_scores).mean;
      for (const auto& q : prep.data.test) {
        run.ranked_test.push_back(detail::rank_by_grade(q));
      }
      break;
    }
  }

  for (int k : kReportCutoffs) {
    std::vector<double> per_query;
    per_query.reserve(prep.data.test.size());
    for (std::size_t i = 0; i < prep.data.test.size(); ++i) {
      per_query.push_back(
          ndcg_of_ranking(prep.data.test[i], run.ranked_test[i].order, k));
    }
    run.outcome.test_ndcg[k] =
        per_query.empty() ? 0.0 : mean_std(per_query).mean;
  }
  run.outcome.wall_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t0)
          .count();
  return run;
}

struct ExperimentResult {
  std::string digest;
  Method method = Method::kVectorization;
  std::vector<SeedOutcome> seeds;

  MeanStd aggregate(int k) const {
    std::vector<double> vals;
    vals.reserve(seeds.size());
    for (const auto& s : seeds) vals.push_back(s.test_ndcg.at(k));
    return mean_std(vals);
  }
};

namespace detail {

inline void write_train_report(const std::string& path,
                               const std::vector<EpochRecord>& report,
                               const SeedOutcome& outcome) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& rec : report) {
    nlohmann::json j;
    j["stage"] = rec.stage;
    j["epoch"] = rec.epoch;
    j["loss"] = rec.loss;
    if (std::isnan(rec.valid_ndcg)) {
      j["valid_ndcg"] = nullptr;
    } else {
      j["valid_ndcg"] = rec.valid_ndcg;
    }
    j["is_best"] = rec.is_best;
    out << j.dump() << '\n';
  }
  nlohmann::json tail;
  tail["summary"] = true;
  tail["seed"] = outcome.seed;
  tail["best_valid_ndcg"] = outcome.best_valid_ndcg;
  tail["wall_ms"] = outcome.wall_ms;
  out << tail.dump() << '\n';
}

inline void write_ranked_jsonl(const std::string& path,
                               const std::vector<RankedList>& ranked,
                               const std::vector<QueryList>& queries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    nlohmann::json j;
    j["qid"] = ranked[i].qid;
    auto& docs = j["docs"] = nlohmann::json::array();
    auto& scores = j["scores"] = nlohmann::json::array();
    auto& labels = j["labels"] = nlohmann::json::array();
    for (int idx : ranked[i].order) {
      docs.push_back(idx);
      scores.push_back(ranked[i].scores[idx]);
      labels.push_back(queries[i].docs[idx].label);
    }
    out << j.dump() << '\n';
  }
}

inline void save_method_models(const std::string& dir, const MethodRun& run,
                               int feature_count,
                               const std::vector<int>& hidden) {
  CheckpointManifest manifest;
  manifest.feature_count = feature_count;
  manifest.hidden = hidden;
  switch (run.method) {
    case Method::kVectorization:
    case Method::kScalarD1:
    case Method::kNaiveClick:
      manifest.dim = run.relevance.dim();
      save_mlp(dir + "/relevance.ckpt", run.relevance.net);
      save_observation_model(dir + "/observation.ckpt", run.observation);
      save_mlp(dir + "/base.ckpt", run.base.net);
      manifest.save(dir + "/manifest.json");
      break;
    case Method::kLabeledOracle:
      manifest.dim = 1;
      save_mlp(dir + "/oracle.ckpt", run.oracle);
      manifest.save(dir + "/manifest.json");
      break;
    case Method::kAnalyticTrust:
      break;  // nothing learned, nothing to save
  }
}

inline std::string format_fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

/// Appends this run's aggregate rows to a metrics table with the header
/// run,method,k,split,mean,std.
inline void write_metrics_csv(const std::string& path,
                              const ExperimentResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "run,method,k,split,mean,std\n";
  for (int k : kReportCutoffs) {
    const MeanStd agg = result.aggregate(k);
    out << result.digest << ',' << to_string(result.method) << ',' << k
        << ",test," << detail::format_fixed(agg.mean) << ','
        << detail::format_fixed(agg.std) << '\n';
  }
  std::vector<double> valid;
  valid.reserve(result.seeds.size());
  for (const auto& s : result.seeds) valid.push_back(s.best_valid_ndcg);
  const MeanStd vagg = mean_std(valid);
  out << result.digest << ',' << to_string(result.method) << ",10,valid,"
      << detail::format_fixed(vagg.mean) << ','
      << detail::format_fixed(vagg.std) << '\n';
}

/// Full pipeline for one config: build data once, train every seed, write
/// checkpoints, reports, rankings and the aggregate metrics table under
/// out_dir/<digest>/.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       bool write_artifacts = true) {
  const Prepared prep = prepare(cfg);
  ExperimentResult result;
  result.digest = config_digest(cfg);
  result.method = cfg.method;

  namespace fs = std::filesystem;
  const fs::path root = fs::path(cfg.out_dir) / result.digest;
  if (write_artifacts) {
    fs::create_directories(root);
    std::ofstream echo(root / "config.json");
    echo << canonical_json(cfg).dump(2) << '\n';
  }

  for (std::uint64_t seed : cfg.seeds) {
    MethodRun run = run_method_seed(prep, cfg.method, cfg.train, seed);
    if (write_artifacts) {
      const fs::path seed_dir = root / ("seed_" + std::to_string(seed));
      fs::create_directories(seed_dir);
      detail::save_method_models(seed_dir.string(), run, prep.data.feature_count,
                                 cfg.train.hidden);
      save_feature_stats((seed_dir / "feature_stats.txt").string(),
                         prep.data.stats);
      detail::write_train_report((seed_dir / "train_report.jsonl").string(),
                                 run.report, run.outcome);
      detail::write_ranked_jsonl((seed_dir / "ranked_test.jsonl").string(),
                                 run.ranked_test, prep.data.test);
    }
    result.seeds.push_back(run.outcome);
  }

  if (write_artifacts) {
    write_metrics_csv((root / "metrics.csv").string(), result);
  }
  return result;
}

struct SweepRow {
  int dim = 0;
  std::uint64_t seed = 0;
  int k = 0;
  double ndcg = 0.0;
};

/// Trains the main method at several embedding dimensions and reports one
/// tidy row per (dim, seed, cutoff).
inline std::vector<SweepRow> sweep_dimension(const ExperimentConfig& cfg,
                                             const std::vector<int>& dims,
                                             bool write_artifacts = true) {
  const Prepared prep = prepare(cfg);
  std::vector<SweepRow> rows;
  for (int dim : dims) {
    TrainConfig tcfg = cfg.train;
    tcfg.dim = dim;
    for (std::uint64_t seed : cfg.seeds) {
      const MethodRun run = run_method_seed(prep, cfg.method, tcfg, seed);
      for (int k : kReportCutoffs) {
        rows.push_back({dim, seed, k, run.outcome.test_ndcg.at(k)});
      }
    }
  }
  if (write_artifacts) {
    namespace fs = std::filesystem;
    const fs::path root = fs::path(cfg.out_dir) / config_digest(cfg);
    fs::create_directories(root);
    std::ofstream out(root / "sweep_dim.csv");
    if (!out) throw std::runtime_error("cannot write sweep_dim.csv");
    out << "dim,seed,k,ndcg\n";
    for (const auto& r : rows) {
      out << r.dim << ',' << r.seed << ',' << r.k << ','
          << detail::format_fixed(r.ndcg) << '\n';
    }
  }
  return rows;
}

struct CompareResult {
  std::vector<Method> methods;
  std::map<std::string, std::map<int, MeanStd>> table;  // method -> k -> agg
  struct Increment {
    std::string method_a;
    std::string method_b;
    int k = 0;
    double percent = 0.0;  // (mean_a - mean_b) / mean_b * 100
  };
  std::vector<Increment> increments;
};

/// Runs several methods on the identical prepared data and tabulates the
/// aggregate nDCG along with pairwise relative improvements in percent.
inline CompareResult compare_methods(const ExperimentConfig& cfg,
                                     const std::vector<Method>& methods,
                                     bool write_artifacts = true) {
  const Prepared prep = prepare(cfg);
  CompareResult result;
  result.methods = methods;
  for (Method m : methods) {
    std::map<int, std::vector<double>> per_k;
    for (std::uint64_t seed : cfg.seeds) {
      const MethodRun run = run_method_seed(prep, m, cfg.train, seed);
      for (int k : kReportCutoffs) {
        per_k[k].push_back(run.outcome.test_ndcg.at(k));
      }
    }
    for (int k : kReportCutoffs) {
      result.table[to_string(m)][k] = mean_std(per_k[k]);
    }
  }
  for (Method a : methods) {
    for (Method b : methods) {
      if (a == b) continue;
      for (int k : kReportCutoffs) {
        const double ma = result.table[to_string(a)][k].mean;
        const double mb = result.table[to_string(b)][k].mean;
        if (mb == 0.0) continue;
        const double pct = std::round((ma - mb) / mb * 100.0 * 100.0) / 100.0;
        result.increments.push_back({to_string(a), to_string(b), k, pct});
      }
    }
  }

  if (write_artifacts) {
    namespace fs = std::filesystem;
    const fs::path root = fs::path(cfg.out_dir) /
                          ("compare_" + config_digest(cfg));
    fs::create_directories(root);
    {
      std::ofstream out(root / "comparison.csv");
      if (!out) throw std::runtime_error("cannot write comparison.csv");
      out << "method,k,mean,std\n";
      for (Method m : methods) {
        for (int k : kReportCutoffs) {
          const MeanStd& agg = result.table[to_string(m)][k];
          out << to_string(m) << ',' << k << ','
              << detail::format_fixed(agg.mean) << ','
              << detail::format_fixed(agg.std) << '\n';
        }
      }
    }
    {
      std::ofstream out(root / "increments.csv");
      if (!out) throw std::runtime_error("cannot write increments.csv");
      out << "method_a,method_b,k,increment_pct\n";
      char buf[32];
      for (const auto& inc : result.increments) {
        std::snprintf(buf, sizeof buf, "%.2f", inc.percent);
        out << inc.method_a << ',' << inc.method_b << ',' << inc.k << ','
            << buf << '\n';
      }
    }
  }
  return result;
}

/// Effective rank of a singular value spectrum at a relative tolerance.
inline int effective_rank(const std::vector<double>& sv, double rel_tol) {
  if (sv.empty() || sv[0] <= 0.0) return 0;
  int rank = 0;
  for (double s : sv) {
    if (s > rel_tol * sv[0]) ++rank;
  }
  return rank;
}

/// Singular value spectrum of a click rate matrix, plus the verdict on
/// whether a rank-1 (scalar examination) factorization can represent it.
struct MatrixDiagnosis {
  std::vector<double> singular;
  int rank = 0;
  bool scalar_sufficient = false;
};

inline MatrixDiagnosis diagnose_matrix(const ClickMatrix& matrix,
                                       double rel_tol = 1e-6) {
  std::vector<std::vector<double>> rows(kNumPositions,
                                        std::vector<double>(kNumGrades));
  for (int p = 1; p <= kNumPositions; ++p) {
    for (int y = 1; y <= kNumGrades; ++y) {
      rows[p - 1][y - 1] = matrix.rate(p, y);
    }
  }
  MatrixDiagnosis d;
  d.singular = singular_values(rows);
  d.rank = effective_rank(d.singular, rel_tol);
  d.scalar_sufficient = d.rank <= 1;
  return d;
}

}  // namespace vecrank
