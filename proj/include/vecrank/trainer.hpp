#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vecrank/click_sim.hpp"
#include "vecrank/data.hpp"
#include "vecrank/eval.hpp"
#include "vecrank/models.hpp"
#include "vecrank/nn.hpp"
#include "vecrank/rng.hpp"

namespace vecrank {

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 32;
  double l2_lambda = 0.001;
  int dim = 5;
  std::vector<int> hidden = {64, 32};
  int stage1_epochs = 300;
  int stage2_epochs = 200;
  int valid_cadence = 10;      // epochs between validation passes
  bool resample_clicks = true; // fresh sessions each epoch vs a frozen log
  int sessions_per_query = 4;  // sessions per query per epoch, or log size
  int eval_k = 10;             // nDCG cutoff used for model selection
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Listwise softmax click loss over one displayed list:
/// L = -sum_i c_i log softmax(scores)_i, with the log-softmax stabilized by
/// subtracting the max score. The gradient with respect to the scores is
/// (sum_i c_i) * softmax(scores) - c.
inline LossGrad click_loss(std::span<const double> scores,
                           std::span<const double> clicks) {
  if (scores.size() != clicks.size() || scores.empty()) {
    throw std::invalid_argument("click_loss: size mismatch");
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> ex(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    ex[i] = std::exp(scores[i] - mx);
    z += ex[i];
  }
  const double log_z = std::log(z);
  LossGrad out;
  out.grad.resize(scores.size());
  double click_sum = 0.0;
  for (double c : clicks) click_sum += c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.loss += clicks[i] * (log_z - (scores[i] - mx));
    out.grad[i] = click_sum * (ex[i] / z) - clicks[i];
  }
  return out;
}

struct BaseLossGrad {
  double loss = 0.0;
  std::vector<std::vector<double>> dmu;
  std::vector<std::vector<double>> dlog_var;
};

/// Heteroscedastic Gaussian regression loss of predicted (mu, s = log
/// sigma^2) against observation targets:
/// L = 1/2 sum_i sum_k [(mu_ik - o_ik)^2 e^(-s_ik) + s_ik] + lambda * |theta|^2.
/// The squared parameter norm is passed in by the caller; its gradient
/// (2 lambda theta) is applied at the parameter level.
inline BaseLossGrad base_loss(const std::vector<GaussianEstimate>& estimates,
                              const std::vector<std::vector<double>>& targets,
                              double lambda, double param_sq_norm) {
  if (estimates.size() != targets.size() || estimates.empty()) {
    throw std::invalid_argument("base_loss: size mismatch");
  }
  BaseLossGrad out;
  out.dmu.resize(estimates.size());
  out.dlog_var.resize(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& est = estimates[i];
    const auto& tgt = targets[i];
    if (est.mu.size() != tgt.size()) {
      throw std::invalid_argument("base_loss: dim mismatch");
    }
    const std::size_t d = est.mu.size();
    out.dmu[i].resize(d);
    out.dlog_var[i].resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = est.mu[k] - tgt[k];
      const double inv_var = std::exp(-est.log_var[k]);
      out.loss += 0.5 * (diff * diff * inv_var + est.log_var[k]);
      out.dmu[i][k] = diff * inv_var;
      out.dlog_var[i][k] = 0.5 * (1.0 - diff * diff * inv_var);
    }
  }
  out.loss += lambda * param_sq_norm;
  return out;
}

struct EpochRecord {
  int stage = 0;  // 1, 2, or 0 for single-stage baselines
  int epoch = 0;
  double loss = 0.0;
  double valid_ndcg = std::numeric_limits<double>::quiet_NaN();
  bool is_best = false;
};

namespace detail {

inline void check_finite(double loss, int stage, int epoch) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error("stage " + std::to_string(stage) +
                             " loss became non-finite at epoch " +
                             std::to_string(epoch));
  }
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

/// Validation score used while the base model does not exist yet: rank by
/// the click score against the average observation embedding.
inline double proxy_valid_ndcg(const RelevanceModel& rel,
                               const ObservationModel& obs,
                               const std::vector<QueryList>& valid, int k) {
  std::vector<double> mean_obs(obs.dim, 0.0);
  for (int p = 1; p <= kNumPositions; ++p) {
    const auto e = obs.embedding(p);
    for (int d = 0; d < obs.dim; ++d) mean_obs[d] += e[d] / kNumPositions;
  }
  std::vector<double> per_query;
  per_query.reserve(valid.size());
  for (const auto& q : valid) {
    std::vector<double> scores(q.docs.size());
    for (std::size_t i = 0; i < q.docs.size(); ++i) {
      scores[i] = dot(rel.embed(q.docs[i].features), mean_obs);
    }
    per_query.push_back(ndcg_of_ranking(q, rank_by_score(scores), k));
  }
  return per_query.empty() ? 0.0 : mean_std(per_query).mean;
}

}  // namespace detail

struct Stage1Result {
  RelevanceModel relevance;
  ObservationModel observation;
  std::vector<EpochRecord> report;
  double best_valid_ndcg = 0.0;
};

/// Jointly trains the relevance network and the observation table on
/// simulated clicks (stage 1 of the two-stage procedure). When
/// `freeze_observation` the table is pinned to all-ones and only the
/// relevance network learns, which is the click-as-relevance baseline.
inline Stage1Result train_stage1(const Dataset& ds, const ClickModelSpec& spec,
                                 const InitialRanker& ranker,
                                 const TrainConfig& cfg,
                                 bool freeze_observation, Rng& rng) {
  Stage1Result result;
  result.relevance =
      RelevanceModel::create(ds.feature_count, cfg.hidden, cfg.dim, rng);
  result.observation = freeze_observation
                           ? ObservationModel::ones(cfg.dim)
                           : ObservationModel::create(cfg.dim, rng);
  RelevanceModel& rel = result.relevance;
  ObservationModel& obs = result.observation;

  std::vector<std::vector<DisplayItem>> displays(ds.train.size());
  for (std::size_t qi = 0; qi < ds.train.size(); ++qi) {
    displays[qi] = display_order(ds.train[qi], ranker);
  }

  struct Session {
    std::size_t query;
    ClickLog log;
  };
  std::vector<Session> frozen;
  if (!cfg.resample_clicks) {
    for (std::size_t qi = 0; qi < ds.train.size(); ++qi) {
      for (int s = 0; s < cfg.sessions_per_query; ++s) {
        frozen.push_back(
            {qi, sample_clicks(spec, ds.train[qi], displays[qi], rng)});
      }
    }
  }
  const std::size_t n_sessions =
      cfg.resample_clicks
          ? ds.train.size() * static_cast<std::size_t>(cfg.sessions_per_query)
          : frozen.size();
  std::vector<std::size_t> order(n_sessions);
  std::iota(order.begin(), order.end(), 0);

  AdaGrad rel_opt(rel.net.param_count(), cfg.learning_rate);
  AdaGrad obs_opt(obs.table.size(), cfg.learning_rate);
  std::vector<double> rel_grad(rel.net.param_count());
  std::vector<double> obs_grad(obs.table.size());

  RelevanceModel best_rel = rel;
  ObservationModel best_obs = obs;
  double best_ndcg = -1.0;

  for (int epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_sessions = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(rel_grad.begin(), rel_grad.end(), 0.0);
      std::fill(obs_grad.begin(), obs_grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < end; ++bi) {
        const std::size_t qi = cfg.resample_clicks
                                   ? order[bi] % ds.train.size()
                                   : frozen[order[bi]].query;
        const QueryList& query = ds.train[qi];
        const auto& display = displays[qi];
        if (display.empty()) continue;
        const ClickLog log =
            cfg.resample_clicks ? sample_clicks(spec, query, display, rng)
                                : frozen[order[bi]].log;

        std::vector<Mlp::Trace> traces(display.size());
        std::vector<std::vector<double>> embeds(display.size());
        std::vector<double> scores(display.size());
        std::vector<double> clicks(display.size());
        for (std::size_t i = 0; i < display.size(); ++i) {
          const auto& doc = query.docs[display[i].doc_index];
          embeds[i] = rel.net.forward(doc.features, &traces[i]);
          scores[i] =
              click_score(embeds[i], obs.embedding(display[i].position));
          clicks[i] = log.items[i].click ? 1.0 : 0.0;
        }
        const LossGrad lg = click_loss(scores, clicks);
        batch_loss += lg.loss;
        for (std::size_t i = 0; i < display.size(); ++i) {
          const auto o = obs.embedding(display[i].position);
          std::vector<double> dembed(cfg.dim);
          for (int k = 0; k < cfg.dim; ++k) dembed[k] = lg.grad[i] * o[k];
          rel.net.backward(traces[i], dembed, rel_grad);
          if (!freeze_observation) {
            double* og = obs_grad.data() +
                         static_cast<std::size_t>(display[i].position - 1) *
                             cfg.dim;
            for (int k = 0; k < cfg.dim; ++k) og[k] += lg.grad[i] * embeds[i][k];
          }
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : rel_grad) g *= scale;
      rel_opt.step(rel.net.params(), rel_grad);
      if (!freeze_observation) {
        for (auto& g : obs_grad) g *= scale;
        obs_opt.step(obs.table, obs_grad);
      }
      epoch_loss += batch_loss;
      epoch_sessions += end - start;
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(1, epoch_sessions));
    detail::check_finite(epoch_loss, 1, epoch);

    EpochRecord rec;
    rec.stage = 1;
    rec.epoch = epoch;
    rec.loss = epoch_loss;
    if (!ds.valid.empty() &&
        (epoch % cfg.valid_cadence == 0 || epoch == cfg.stage1_epochs)) {
      rec.valid_ndcg = detail::proxy_valid_ndcg(rel, obs, ds.valid, cfg.eval_k);
      if (rec.valid_ndcg > best_ndcg) {
        best_ndcg = rec.valid_ndcg;
        best_rel = rel;
        best_obs = obs;
        rec.is_best = true;
      }
    }
    result.report.push_back(rec);
  }

  if (best_ndcg >= 0.0) {
    result.relevance = std::move(best_rel);
    result.observation = std::move(best_obs);
    result.best_valid_ndcg = best_ndcg;
  }
  return result;
}

/// Ranks one query with the trained pair of models: predict each document's
/// relevance Gaussian, collapse them into the query's base vector, and sort
/// by the projection r(x) . v.
inline RankedList infer_ranking(const RelevanceModel& rel,
                                const BaseModel& base, const QueryList& query) {
  std::vector<GaussianEstimate> estimates;
  estimates.reserve(query.docs.size());
  for (const auto& doc : query.docs) {
    estimates.push_back(predict_gaussian(base, doc.features));
  }
  const std::vector<double> v = compute_base_vector(estimates);
  RankedList out;
  out.qid = query.qid;
  out.scores.resize(query.docs.size());
  for (std::size_t i = 0; i < query.docs.size(); ++i) {
    out.scores[i] = dot(rel.embed(query.docs[i].features), v);
  }
  out.order = rank_by_score(out.scores);
  return out;
}

inline double mean_test_ndcg(const RelevanceModel& rel, const BaseModel& base,
                             const std::vector<QueryList>& queries, int k) {
  std::vector<double> per_query;
  per_query.reserve(queries.size());
  for (const auto& q : queries) {
    const RankedList ranked = infer_ranking(rel, base, q);
    per_query.push_back(ndcg_of_ranking(q, ranked.order, k));
  }
  return per_query.empty() ? 0.0 : mean_std(per_query).mean;
}

struct Stage2Result {
  BaseModel base;
  std::vector<EpochRecord> report;
  double best_valid_ndcg = 0.0;
};

/// Fits the base model to the frozen observation embeddings (stage 2). Every
/// (document, position) pair that was displayed during stage 1 becomes one
/// regression example whose target is the stage 1 embedding of its position.
inline Stage2Result train_stage2(const Dataset& ds,
                                 const RelevanceModel& rel,
                                 const ObservationModel& obs,
                                 const InitialRanker& ranker,
                                 const TrainConfig& cfg, Rng& rng) {
  Stage2Result result;
  result.base = BaseModel::create(ds.feature_count, cfg.hidden, cfg.dim, rng);
  BaseModel& base = result.base;
  const int d = cfg.dim;

  struct Pair {
    std::size_t query;
    int doc_index;
    int position;
  };
  std::vector<Pair> pairs;
  for (std::size_t qi = 0; qi < ds.train.size(); ++qi) {
    for (const auto& slot : display_order(ds.train[qi], ranker)) {
      pairs.push_back({qi, slot.doc_index, slot.position});
    }
  }
  if (pairs.empty()) {
    throw std::runtime_error("stage 2 has no displayed pairs to fit");
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  AdaGrad opt(base.net.param_count(), cfg.learning_rate);
  std::vector<double> grad(base.net.param_count());

  BaseModel best = base;
  double best_ndcg = -1.0;

  for (int epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < end; ++bi) {
        const Pair& pr = pairs[order[bi]];
        const auto& doc = ds.train[pr.query].docs[pr.doc_index];
        Mlp::Trace trace;
        const std::vector<double> raw = base.net.forward(doc.features, &trace);
        const auto target = obs.embedding(pr.position);
        std::vector<double> dout(2 * d, 0.0);
        for (int k = 0; k < d; ++k) {
          const double s_raw = raw[d + k];
          const double s = std::clamp(s_raw, kLogVarMin, kLogVarMax);
          const double diff = raw[k] - target[k];
          const double inv_var = std::exp(-s);
          batch_loss += 0.5 * (diff * diff * inv_var + s);
          dout[k] = diff * inv_var;
          if (s_raw > kLogVarMin && s_raw < kLogVarMax) {
            dout[d + k] = 0.5 * (1.0 - diff * diff * inv_var);
          }
        }
        base.net.backward(trace, dout, grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      const auto& params = base.net.params();
      for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = grad[i] * scale + 2.0 * cfg.l2_lambda * params[i];
      }
      opt.step(base.net.params(), grad);
      epoch_loss += batch_loss;
    }
    epoch_loss =
        epoch_loss / static_cast<double>(pairs.size()) +
        cfg.l2_lambda * detail::squared_norm(base.net.params());
    detail::check_finite(epoch_loss, 2, epoch);

    EpochRecord rec;
    rec.stage = 2;
    rec.epoch = epoch;
    rec.loss = epoch_loss;
    if (!ds.valid.empty() &&
        (epoch % cfg.valid_cadence == 0 || epoch == cfg.stage2_epochs)) {
      rec.valid_ndcg = mean_test_ndcg(rel, base, ds.valid, cfg.eval_k);
      if (rec.valid_ndcg > best_ndcg) {
        best_ndcg = rec.valid_ndcg;
        best = base;
        rec.is_best = true;
      }
    }
    result.report.push_back(rec);
  }

  if (best_ndcg >= 0.0) {
    result.base = std::move(best);
    result.best_valid_ndcg = best_ndcg;
  }
  return result;
}

struct OracleResult {
  Mlp net;  // feature_count -> hidden... -> 1
  std::vector<EpochRecord> report;
  double best_valid_ndcg = 0.0;
};

/// Skyline trained on the true labels: a scalar scorer fit with the same
/// listwise loss over full (untruncated) lists, weighting each document by
/// its ndcg gain 2^label - 1 so the objective emphasizes grades the way the
/// evaluation metric does. No position bias is involved.
inline OracleResult train_labeled_oracle(const Dataset& ds,
                                         const TrainConfig& cfg, Rng& rng) {
  OracleResult result;
  std::vector<int> sizes;
  sizes.push_back(ds.feature_count);
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  result.net = Mlp::create(sizes, rng);
  Mlp& net = result.net;

  std::vector<std::size_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), 0);
  AdaGrad opt(net.param_count(), cfg.learning_rate);
  std::vector<double> grad(net.param_count());

  Mlp best = net;
  double best_ndcg = -1.0;

  const auto valid_ndcg = [&](const Mlp& model) {
    std::vector<double> per_query;
    for (const auto& q : ds.valid) {
      std::vector<double> scores(q.docs.size());
      for (std::size_t i = 0; i < q.docs.size(); ++i) {
        scores[i] = model.forward(q.docs[i].features)[0];
      }
      per_query.push_back(ndcg_of_ranking(q, rank_by_score(scores), cfg.eval_k));
    }
    return per_query.empty() ? 0.0 : mean_std(per_query).mean;
  };

  for (int epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < end; ++bi) {
        const QueryList& query = ds.train[order[bi]];
        if (query.docs.empty()) continue;
        std::vector<Mlp::Trace> traces(query.docs.size());
        std::vector<double> scores(query.docs.size());
        std::vector<double> weights(query.docs.size());
        for (std::size_t i = 0; i < query.docs.size(); ++i) {
          scores[i] = net.forward(query.docs[i].features, &traces[i])[0];
          weights[i] =
              std::pow(2.0, static_cast<double>(query.docs[i].label)) - 1.0;
        }
        const LossGrad lg = click_loss(scores, weights);
        batch_loss += lg.loss;
        for (std::size_t i = 0; i < query.docs.size(); ++i) {
          const double dscore[1] = {lg.grad[i]};
          net.backward(traces[i], dscore, grad);
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grad) g *= scale;
      opt.step(net.params(), grad);
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(1, ds.train.size()));
    detail::check_finite(epoch_loss, 0, epoch);

    EpochRecord rec;
    rec.stage = 0;
    rec.epoch = epoch;
    rec.loss = epoch_loss;
    if (!ds.valid.empty() &&
        (epoch % cfg.valid_cadence == 0 || epoch == cfg.stage1_epochs)) {
      rec.valid_ndcg = valid_ndcg(net);
      if (rec.valid_ndcg > best_ndcg) {
        best_ndcg = rec.valid_ndcg;
        best = net;
        rec.is_best = true;
      }
    }
    result.report.push_back(rec);
  }

  if (best_ndcg >= 0.0) {
    result.net = std::move(best);
    result.best_valid_ndcg = best_ndcg;
  }
  return result;
}

}  // namespace vecrank
