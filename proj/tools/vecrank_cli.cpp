// Command line front end for the ranking toolkit: data synthesis, training,
// ranking with saved checkpoints, evaluation and click matrix diagnostics.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vecrank/vecrank.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::istringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

vecrank::ExperimentConfig load_config(const std::string& path,
                                      std::int64_t seed_override,
                                      const std::string& out_override) {
  vecrank::ExperimentConfig cfg = vecrank::load_experiment_config(path);
  if (seed_override >= 0) {
    cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

int cmd_synth(const std::string& config_path, std::int64_t seed_override,
              const std::string& out_dir) {
  vecrank::SyntheticSpec spec;
  if (!config_path.empty()) {
    const auto cfg = vecrank::load_experiment_config(config_path);
    if (!cfg.dataset.synthetic) {
      throw std::runtime_error("synth needs a synthetic dataset config");
    }
    spec = cfg.dataset.synth;
  }
  if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
  const vecrank::Dataset ds = vecrank::generate_synthetic_dataset(
      spec.num_queries, spec.docs_per_query, spec.feature_count, spec.seed);
  fs::create_directories(out_dir);
  const auto write_split = [&](const char* name,
                               const std::vector<vecrank::QueryList>& split) {
    std::ofstream out(fs::path(out_dir) / name);
    out << vecrank::serialize_letor(split);
  };
  write_split("train.txt", ds.train);
  write_split("valid.txt", ds.valid);
  write_split("test.txt", ds.test);
  std::printf("wrote %zu/%zu/%zu queries (train/valid/test) to %s\n",
              ds.train.size(), ds.valid.size(), ds.test.size(),
              out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, std::int64_t seed_override,
              const std::string& out_override) {
  const auto cfg = load_config(config_path, seed_override, out_override);
  const vecrank::ExperimentResult result = vecrank::run_experiment(cfg);
  std::printf("run %s method %s\n", result.digest.c_str(),
              vecrank::to_string(result.method));
  for (const auto& s : result.seeds) {
    std::printf("  seed %llu  ndcg@10 %.6f  (%.0f ms)\n",
                static_cast<unsigned long long>(s.seed), s.test_ndcg.at(10),
                s.wall_ms);
  }
  const vecrank::MeanStd agg = result.aggregate(10);
  std::printf("  mean ndcg@10 %.6f +- %.6f over %zu seeds\n", agg.mean,
              agg.std, result.seeds.size());
  std::printf("artifacts under %s/%s\n", cfg.out_dir.c_str(),
              result.digest.c_str());
  return 0;
}

int cmd_rank(const std::string& model_dir, const std::string& data_path,
             const std::string& out_path) {
  const vecrank::CheckpointManifest manifest =
      vecrank::CheckpointManifest::load(model_dir + "/manifest.json");
  std::ifstream data_in(data_path);
  if (!data_in) throw std::runtime_error("cannot read " + data_path);
  std::vector<vecrank::QueryList> queries =
      vecrank::parse_letor(data_in, manifest.feature_count);
  const vecrank::FeatureStats stats =
      vecrank::load_feature_stats(model_dir + "/feature_stats.txt");
  vecrank::apply_feature_stats(queries, stats, /*clip=*/true);

  std::vector<vecrank::RankedList> ranked;
  if (fs::exists(model_dir + "/oracle.ckpt")) {
    const vecrank::Mlp net = vecrank::load_mlp(model_dir + "/oracle.ckpt");
    for (const auto& q : queries) {
      vecrank::RankedList r;
      r.qid = q.qid;
      r.scores.resize(q.docs.size());
      for (std::size_t i = 0; i < q.docs.size(); ++i) {
        r.scores[i] = net.forward(q.docs[i].features)[0];
      }
      r.order = vecrank::rank_by_score(r.scores);
      ranked.push_back(std::move(r));
    }
  } else {
    vecrank::RelevanceModel rel{
        vecrank::load_mlp(model_dir + "/relevance.ckpt")};
    vecrank::BaseModel base{vecrank::load_mlp(model_dir + "/base.ckpt")};
    for (const auto& q : queries) {
      ranked.push_back(vecrank::infer_ranking(rel, base, q));
    }
  }

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
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
  std::printf("ranked %zu queries -> %s\n", ranked.size(), out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ranked_path, const std::string& cutoffs_csv) {
  std::ifstream in(ranked_path);
  if (!in) throw std::runtime_error("cannot read " + ranked_path);
  std::vector<std::vector<int>> label_lists;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    label_lists.push_back(j.at("labels").get<std::vector<int>>());
  }
  if (label_lists.empty()) throw std::runtime_error("no ranked queries found");
  for (int k : parse_int_list(cutoffs_csv)) {
    std::vector<double> per_query;
    per_query.reserve(label_lists.size());
    for (const auto& labels : label_lists) {
      per_query.push_back(vecrank::ndcg_at_k(labels, k));
    }
    const vecrank::MeanStd agg = vecrank::mean_std(per_query);
    std::printf("ndcg@%d %.6f +- %.6f over %zu queries\n", k, agg.mean,
                agg.std, label_lists.size());
  }
  return 0;
}

int cmd_sweep_dim(const std::string& config_path, const std::string& dims_csv,
                  std::int64_t seed_override, const std::string& out_override) {
  const auto cfg = load_config(config_path, seed_override, out_override);
  const auto dims = parse_int_list(dims_csv);
  if (dims.empty()) throw std::runtime_error("sweep-dim needs --dims");
  const auto rows = vecrank::sweep_dimension(cfg, dims);
  std::printf("dim,seed,k,ndcg\n");
  for (const auto& r : rows) {
    if (r.k != cfg.train.eval_k) continue;
    std::printf("%d,%llu,%d,%.6f\n", r.dim,
                static_cast<unsigned long long>(r.seed), r.k, r.ndcg);
  }
  return 0;
}

int cmd_compare(const std::string& config_path, const std::string& methods_csv,
                std::int64_t seed_override, const std::string& out_override) {
  const auto cfg = load_config(config_path, seed_override, out_override);
  std::vector<vecrank::Method> methods;
  std::istringstream ss(methods_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) methods.push_back(vecrank::method_from_string(tok));
  }
  if (methods.empty()) throw std::runtime_error("compare needs --methods");
  const auto result = vecrank::compare_methods(cfg, methods);
  std::printf("%-16s", "method");
  for (int k : vecrank::kReportCutoffs) std::printf("  ndcg@%-2d        ", k);
  std::printf("\n");
  for (const auto m : methods) {
    std::printf("%-16s", vecrank::to_string(m));
    for (int k : vecrank::kReportCutoffs) {
      const auto& agg = result.table.at(vecrank::to_string(m)).at(k);
      std::printf("  %.4f +- %.4f", agg.mean, agg.std);
    }
    std::printf("\n");
  }
  for (const auto& inc : result.increments) {
    if (inc.k != cfg.train.eval_k) continue;
    std::printf("increment %s over %s at k=%d: %.2f%%\n", inc.method_a.c_str(),
                inc.method_b.c_str(), inc.k, inc.percent);
  }
  return 0;
}

int cmd_diagnose(const std::string& csv_path, const std::string& setting) {
  vecrank::ClickMatrix matrix;
  if (!csv_path.empty()) {
    matrix = vecrank::ClickMatrix::load_csv(csv_path);
  } else {
    vecrank::ClicksSpec spec;
    spec.setting = vecrank::click_setting_from_string(setting);
    matrix = vecrank::build_click_spec(spec).implied_matrix();
  }
  const vecrank::MatrixDiagnosis d = vecrank::diagnose_matrix(matrix);
  std::printf("singular values:");
  for (double s : d.singular) std::printf(" %.6e", s);
  std::printf("\neffective rank: %d\n", d.rank);
  std::printf("scalar examination model sufficient: %s\n",
              d.scalar_sufficient ? "yes" : "no");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vectorized unbiased learning-to-rank toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "data", out_override, out_path,
      model_dir, data_path;
  std::string dims_csv = "1,2,3,4,5";
  std::string methods_csv = "vectorization,naive_click,labeled_oracle";
  std::string cutoffs_csv = "1,3,5,10";
  std::string matrix_csv, setting = "real_matrix";
  std::int64_t seed = -1;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_path, "experiment config json");
  synth->add_option("--seed", seed, "dataset seed override");
  synth->add_option("--out", out_dir, "output directory");

  auto* train = app.add_subcommand("train", "train one method over seeds");
  train->add_option("--config", config_path, "experiment config json")
      ->required();
  train->add_option("--seed", seed, "single seed override");
  train->add_option("--out", out_override, "output directory override");

  auto* rank = app.add_subcommand("rank", "rank a letor file with checkpoints");
  rank->add_option("--model-dir", model_dir, "seed directory with checkpoints")
      ->required();
  rank->add_option("--data", data_path, "letor file to rank")->required();
  rank->add_option("--out", out_path, "ranked jsonl path")->required();

  auto* eval = app.add_subcommand("eval", "score a ranked jsonl file");
  eval->add_option("--ranked", out_path, "ranked jsonl path")->required();
  eval->add_option("--k", cutoffs_csv, "comma separated cutoffs");

  auto* sweep = app.add_subcommand("sweep-dim", "train across dimensions");
  sweep->add_option("--config", config_path, "experiment config json")
      ->required();
  sweep->add_option("--dims", dims_csv, "comma separated dimensions");
  sweep->add_option("--seed", seed, "single seed override");
  sweep->add_option("--out", out_override, "output directory override");

  auto* compare = app.add_subcommand("compare", "run several methods");
  compare->add_option("--config", config_path, "experiment config json")
      ->required();
  compare->add_option("--methods", methods_csv, "comma separated methods");
  compare->add_option("--seed", seed, "single seed override");
  compare->add_option("--out", out_override, "output directory override");

  auto* diagnose =
      app.add_subcommand("diagnose-matrix", "rank analysis of click rates");
  diagnose->add_option("--csv", matrix_csv, "click matrix csv path");
  diagnose->add_option("--setting", setting,
                       "real_matrix, trust_bias or pbm (when no csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, seed, out_dir);
    if (train->parsed()) return cmd_train(config_path, seed, out_override);
    if (rank->parsed()) return cmd_rank(model_dir, data_path, out_path);
    if (eval->parsed()) return cmd_eval(out_path, cutoffs_csv);
    if (sweep->parsed())
      return cmd_sweep_dim(config_path, dims_csv, seed, out_override);
    if (compare->parsed())
      return cmd_compare(config_path, methods_csv, seed, out_override);
    if (diagnose->parsed()) return cmd_diagnose(matrix_csv, setting);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
