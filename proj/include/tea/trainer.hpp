#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tea/model.hpp"

namespace tea {

enum class OptimizerKind { Sgd, Momentum, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  ///< global gradient-norm clip, 0 disables
};

template <typename Scalar>
class Optimizer {
 public:
  Optimizer(const ad::ParameterSet<Scalar>& params, OptimizerConfig cfg)
      : cfg_(cfg), first_(params.zeros_like()), second_(params.zeros_like()) {}

  /// `scale`, when non-empty, multiplies the rate of each parameter.
  void step(ad::ParameterSet<Scalar>& params, ad::Gradients<Scalar>& grads, double lr,
            const std::vector<double>& scale = {}) {
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads) sq += static_cast<double>(g.squaredNorm());
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) {
        const auto s = static_cast<Scalar>(cfg_.clip_norm / norm);
        for (auto& g : grads) g *= s;
      }
    }
    ++steps_;
    for (int i = 0; i < params.size(); ++i) {
      const auto rate = static_cast<Scalar>(scale.empty() ? lr : lr * scale[i]);
      auto& p = params.value(i);
      const auto& g = grads[i];
      switch (cfg_.kind) {
        case OptimizerKind::Sgd:
          p -= rate * g;
          break;
        case OptimizerKind::Momentum:
          first_[i] = static_cast<Scalar>(cfg_.momentum) * first_[i] + g;
          p -= rate * first_[i];
          break;
        case OptimizerKind::Adam: {
          const auto b1 = static_cast<Scalar>(cfg_.beta1);
          const auto b2 = static_cast<Scalar>(cfg_.beta2);
          first_[i] = b1 * first_[i] + (Scalar(1) - b1) * g;
          second_[i] = b2 * second_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
          const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_)));
          const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_)));
          p.array() -= rate * (first_[i].array() / c1) /
                       ((second_[i].array() / c2).sqrt() + static_cast<Scalar>(cfg_.eps));
          break;
        }
      }
    }
  }

  long steps() const { return steps_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Matrix<Scalar>> first_;
  std::vector<Matrix<Scalar>> second_;
  long steps_ = 0;
};

template <typename Scalar>
struct BatchResult {
  double loss = 0.0;  ///< mean token cross-entropy before the update
  int tokens = 0;
};

/// Mean token cross-entropy and its parameter gradients over a batch.
/// Per-sample gradients are summed in batch order whatever the thread count,
/// so results are bit-identical for any `threads`.
template <typename Scalar>
BatchResult<Scalar> batch_gradients(const Model<Scalar>& model,
                                    std::span<const typename Model<Scalar>::Prepared* const> batch,
                                    ad::Gradients<Scalar>& grads, int threads = 1) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const auto n = batch.size();
  std::vector<Scalar> losses(n);
  std::vector<int> counts(n);
  auto run_one = [&](std::size_t i, ad::Gradients<Scalar>& into) {
    ad::Tape<Scalar> tape(&model.params());
    ad::Var loss = model.loss_on(tape, *batch[i]);
    losses[i] = tape.value(loss)(0, 0);
    counts[i] = static_cast<int>(batch[i]->target_ids.size());
    tape.backward(loss);
    tape.accumulate_param_grads(into);
  };
  grads = model.params().zeros_like();
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i, grads);
  } else {
    std::vector<ad::Gradients<Scalar>> per(n);
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += threads) {
          per[i] = model.params().zeros_like();
          run_one(i, per[i]);
        }
      });
    }
    for (auto& th : pool) th.join();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += per[i][k];
    }
  }
  BatchResult<Scalar> r;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(losses[i]))) {
      throw NumericError("non-finite loss on sample '" + batch[i]->video_id + "'");
    }
    sum += static_cast<double>(losses[i]);
    r.tokens += counts[i];
  }
  r.loss = sum / r.tokens;
  const auto inv = static_cast<Scalar>(1.0 / r.tokens);
  for (auto& g : grads) g *= inv;
  return r;
}

/// One optimizer update on a batch; returns the pre-update mean token loss.
template <typename Scalar>
double train_step(Model<Scalar>& model, std::span<const typename Model<Scalar>::Prepared* const> batch,
                  Optimizer<Scalar>& opt, double lr, int threads = 1, const std::vector<double>& scale = {}) {
  ad::Gradients<Scalar> grads;
  const auto r = batch_gradients(model, batch, grads, threads);
  opt.step(model.params(), grads, lr, scale);
  return r.loss;
}

struct TrainConfig {
  int epochs = 10;
  int max_steps = 0;  ///< stop early after this many updates, 0 = no limit
  int batch_size = 16;
  double learning_rate = 0.05;
  double warmup_steps = 0;        ///< linear warm-up length
  bool cosine_decay = false;      ///< decay to 10% of the rate over the run
  double time_budget_s = 0.0;     ///< stop once exceeded, 0 = no limit
  double spatial_lr_mult = 1.0;   ///< rate multiplier for the spatial-bias projections
  bool relabel_texts = false;     ///< per-step scene-text substitution, see relabel_scene_text
  std::uint64_t seed = 0;
  int threads = 1;
  OptimizerConfig optimizer;
};

/// Non-reserved token ids occurring in scene-text slots of `data`.
template <typename Scalar>
std::vector<int> scene_text_token_pool(const std::vector<typename Model<Scalar>::Prepared>& data) {
  std::vector<int> pool;
  for (const auto& p : data) {
    for (int i = 0; i < p.entity_len(); ++i) {
      if (p.seq.slots[i].is_padding() || !p.seq.slots[i].is_scene_text) continue;
      for (int id : p.entity_ids[i]) {
        if (id >= TokenVocab::kNumReserved) pool.push_back(id);
      }
    }
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  return pool;
}

/// Copy of `p` whose scene-text tokens are replaced by distinct random tokens
/// from `pool`, consistently across entities, question and answer. Geometry,
/// masks and slot layout are untouched, so the answer stays the same entity.
template <typename Scalar>
typename Model<Scalar>::Prepared relabel_scene_text(const typename Model<Scalar>::Prepared& p,
                                                    const std::vector<int>& pool, std::mt19937_64& rng) {
  std::vector<int> own;
  for (int i = 0; i < p.entity_len(); ++i) {
    if (p.seq.slots[i].is_padding() || !p.seq.slots[i].is_scene_text) continue;
    for (int id : p.entity_ids[i]) {
      if (id >= TokenVocab::kNumReserved) own.push_back(id);
    }
  }
  std::sort(own.begin(), own.end());
  own.erase(std::unique(own.begin(), own.end()), own.end());
  if (own.size() > pool.size()) return p;
  std::vector<int> fresh = pool;
  for (std::size_t k = 0; k < own.size(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, fresh.size() - 1);
    std::swap(fresh[k], fresh[pick(rng)]);
  }
  auto map = [&](int id) {
    const auto it = std::lower_bound(own.begin(), own.end(), id);
    return it != own.end() && *it == id ? fresh[static_cast<std::size_t>(it - own.begin())] : id;
  };
  auto out = p;
  for (auto& ids : out.entity_ids) {
    for (int& id : ids) id = map(id);
  }
  for (int& id : out.question_ids) id = map(id);
  for (int& id : out.target_ids) id = map(id);
  return out;
}

struct TrainLogEntry {
  long step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

/// Epoch loop with a seeded shuffle per epoch. `on_step` sees every update.
template <typename Scalar>
std::vector<TrainLogEntry> fit(Model<Scalar>& model, const std::vector<typename Model<Scalar>::Prepared>& data,
                               const TrainConfig& cfg,
                               const std::function<void(const TrainLogEntry&)>& on_step = {}) {
  if (data.empty()) throw std::invalid_argument("fit: empty training set");
  Optimizer<Scalar> opt(model.params(), cfg.optimizer);
  std::vector<double> scale;
  if (cfg.spatial_lr_mult != 1.0) {
    for (int i = 0; i < model.params().size(); ++i) {
      const auto& name = model.params().name(i);
      const bool spatial = name.rfind("spatial.", 0) == 0 || name.find(".spatial.") != std::string::npos;
      scale.push_back(spatial ? cfg.spatial_lr_mult : 1.0);
    }
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const long per_epoch = static_cast<long>((data.size() + cfg.batch_size - 1) / cfg.batch_size);
  long total = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min<long>(total, cfg.max_steps);
  const auto pool = cfg.relabel_texts ? scene_text_token_pool<Scalar>(data) : std::vector<int>{};
  std::mt19937_64 relabel_rng(cfg.seed ^ 0x5eedULL);
  std::vector<typename Model<Scalar>::Prepared> relabeled;
  std::vector<TrainLogEntry> log;
  const auto start = std::chrono::steady_clock::now();
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size() && step < total; b += cfg.batch_size) {
      std::vector<const typename Model<Scalar>::Prepared*> batch;
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      if (cfg.relabel_texts) {
        relabeled.clear();
        for (std::size_t k = b; k < end; ++k) relabeled.push_back(relabel_scene_text<Scalar>(data[order[k]], pool, relabel_rng));
        for (const auto& r : relabeled) batch.push_back(&r);
      } else {
        for (std::size_t k = b; k < end; ++k) batch.push_back(&data[order[k]]);
      }
      double lr = cfg.learning_rate;
      if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) lr *= (step + 1) / cfg.warmup_steps;
      if (cfg.cosine_decay) {
        const double progress = static_cast<double>(step) / static_cast<double>(total);
        lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
      }
      TrainLogEntry e;
      e.step = step;
      e.loss = train_step<Scalar>(model, batch, opt, lr, cfg.threads, scale);
      e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      log.push_back(e);
      if (on_step) on_step(e);
      ++step;
      if (cfg.time_budget_s > 0 && e.wall_ms > cfg.time_budget_s * 1000.0) return log;
    }
  }
  return log;
}

}  // namespace tea
