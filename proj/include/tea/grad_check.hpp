#pragma once

// Central finite differences against the tape's analytic gradients, on small
// random instances of each building block.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tea/model.hpp"

namespace tea {

struct GradCheckReport {
  std::string selector;
  double max_rel_error = 0.0;
  std::string worst_param;  ///< parameter holding the worst entry
  long entries = 0;         ///< number of coordinates compared
};

inline const std::vector<std::string>& grad_check_selectors() {
  static const std::vector<std::string> s{"spatial_bias", "spatial_bias_all_phases", "temporal_adapter",
                                          "attention",    "attention_blocks",        "feed_forward",
                                          "clues",        "full_model"};
  return s;
}

using ScalarLoss = std::function<ad::Var(ad::Tape<double>&)>;

/// Compares d(loss)/d(param) for every coordinate of `params` (at most
/// `max_per_tensor` sampled coordinates per tensor; 0 = all).
inline GradCheckReport compare_gradients(ad::ParameterSet<double>& params, const ScalarLoss& loss, double step,
                                         std::mt19937_64& rng, int max_per_tensor = 0) {
  ad::Gradients<double> analytic = params.zeros_like();
  {
    ad::Tape<double> t(&params);
    ad::Var root = loss(t);
    t.backward(root);
    t.accumulate_param_grads(analytic);
  }
  auto eval = [&] {
    ad::Tape<double> t(&params);
    t.set_track_params(false);
    return t.value(loss(t))(0, 0);
  };
  GradCheckReport r;
  for (int p = 0; p < params.size(); ++p) {
    auto& m = params.value(p);
    std::vector<Eigen::Index> coords;
    if (max_per_tensor > 0 && m.size() > max_per_tensor) {
      std::uniform_int_distribution<Eigen::Index> pick(0, m.size() - 1);
      for (int k = 0; k < max_per_tensor; ++k) coords.push_back(pick(rng));
    } else {
      for (Eigen::Index k = 0; k < m.size(); ++k) coords.push_back(k);
    }
    for (Eigen::Index k : coords) {
      const double saved = m.data()[k];
      m.data()[k] = saved + step;
      const double up = eval();
      m.data()[k] = saved - step;
      const double down = eval();
      m.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].data()[k];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8);
      ++r.entries;
      if (rel >= r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = params.name(p);
      }
    }
  }
  return r;
}

namespace detail {

inline Matrix<double> random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Two frames mixing grouped scene text, an object and padding.
inline VideoSample grad_check_sample(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.6);
  VideoSample s;
  s.video_id = "gradcheck";
  s.num_frames = 2;
  s.question = "what is next to the sign";
  s.answers = {"stop"};
  const char* words[] = {"stop", "go", "exit", "left"};
  for (int f = 0; f < 2; ++f) {
    for (int w = 0; w < 2 - f; ++w) {
      VisualEntity e;
      e.kind = EntityKind::SceneText;
      e.text = words[(f * 2 + w) % 4];
      e.frame_index = f;
      const double x = u(rng), y = u(rng);
      e.word_box = {x, y, x + 0.1, y + 0.05};
      e.line_box = BoundingBox{x - 0.02, y, x + 0.3, y + 0.05};
      e.para_box = BoundingBox{x - 0.04, y - 0.03, x + 0.35, y + 0.2};
      s.entities.push_back(e);
    }
    VisualEntity o;
    o.kind = EntityKind::Object;
    o.text = "car";
    o.frame_index = f;
    const double x = u(rng), y = u(rng);
    o.word_box = {x, y, x + 0.2, y + 0.2};
    s.entities.push_back(o);
  }
  return s;
}

}  // namespace detail

/// Runs the finite-difference check named by `selector`; step 1e-3 in double.
inline GradCheckReport grad_check(const std::string& selector, std::uint64_t seed) {
  using namespace ad;
  std::mt19937_64 rng(seed);
  const double step = 1e-3;
  ParameterSet<double> ps;
  ScalarLoss loss;
  int max_per_tensor = 0;

  if (selector == "spatial_bias" || selector == "spatial_bias_all_phases") {
    const VideoSample sample = detail::grad_check_sample(rng);
    const auto seq = build_entity_sequence(sample, 2, 1);
    SpatialBiasConfig cfg;
    cfg.d_s = 8;
    cfg.heads = 2;
    cfg.all_phases = selector == "spatial_bias_all_phases";
    auto tab = std::make_shared<const SpatialTables<double>>(spatial_tables<double>(seq, cfg));
    std::array<int, kNumGranularities> w{};
    for (int g = 0; g < kNumGranularities; ++g) {
      w[g] = ps.add("w" + std::to_string(g), detail::random_matrix(rng, cfg.feature_dim(), cfg.heads, 0.5));
    }
    const Eigen::Index total = seq.size() + 2;
    Matrix<double> r = detail::random_matrix(rng, cfg.heads * total, total, 1.0);
    loss = [=](Tape<double>& t) {
      Var b = spatial_bias_op(t, tab, {t.param(w[0]), t.param(w[1]), t.param(w[2])}, total);
      return weighted_sum(t, b, r);
    };
  } else if (selector == "temporal_adapter") {
    TemporalAdapterConfig cfg;
    cfg.reduction = 4;
    const int d = 8, c = d / cfg.reduction;
    const GridShape shape{3, 4};
    const int x = ps.add("input", detail::random_matrix(rng, shape.rows(), d, 1.0));
    const int down = ps.add("down", detail::random_matrix(rng, d, c, 0.5));
    const int kernel = ps.add("kernel", detail::random_matrix(rng, c, cfg.taps(), 0.5));
    const int bias = ps.add("bias", detail::random_matrix(rng, 1, c, 0.5));
    const int up = ps.add("up", detail::random_matrix(rng, c, d, 0.5));
    Matrix<double> r = detail::random_matrix(rng, shape.rows(), d, 1.0);
    loss = [=](Tape<double>& t) {
      Var y = temporal_adapter_op(t, t.param(x), {t.param(down), t.param(kernel), t.param(bias), t.param(up)},
                                  shape, cfg);
      return weighted_sum(t, y, r);
    };
  } else if (selector == "attention" || selector == "attention_blocks" || selector == "feed_forward") {
    // attention_blocks uses a sparse block-diagonal mask, which takes the
    // grouped attention path instead of the dense one
    const bool blocks = selector == "attention_blocks";
    const int L = blocks ? 6 : 3, d = 8, heads = 2;
    const int x = ps.add("input", detail::random_matrix(rng, L, d, 1.0));
    ParamFactory<double> f(ps, rng);
    Matrix<double> r = detail::random_matrix(rng, L, d, 1.0);
    if (selector != "feed_forward") {
      const auto ids = f.attention("attn", d);
      ps.value(ids.norm) = detail::random_matrix(rng, 1, d, 0.3).array() + 1.0;
      const int bias = ps.add("bias", detail::random_matrix(rng, heads * L, L, 0.5));
      Mask m = Mask::Constant(L, L, !blocks);
      if (blocks) {
        for (int i = 0; i < L; ++i) {
          for (int j = 0; j < L; ++j) m(i, j) = i / 2 == j / 2;
        }
        m(5, 0) = true;  // a row whose column set differs from its block
      } else {
        m(0, 2) = false;
      }
      auto mask = std::make_shared<const Mask>(m);
      loss = [=](Tape<double>& t) {
        return weighted_sum(t, self_attention_block(t, t.param(x), ids, heads, t.param(bias), mask), r);
      };
    } else {
      const auto ids = f.feed_forward("ff", d, 16);
      ps.value(ids.norm) = detail::random_matrix(rng, 1, d, 0.3).array() + 1.0;
      loss = [=](Tape<double>& t) { return weighted_sum(t, feed_forward_block(t, t.param(x), ids), r); };
    }
  } else if (selector == "clues") {
    const VideoSample sample = detail::grad_check_sample(rng);
    const auto seq = build_entity_sequence(sample, 2, 1);
    const int d = 8, heads = 2, q = 3;
    CluesConfig cfg;
    cfg.num_clues = 3;
    cfg.layers = 1;
    ParamFactory<double> f(ps, rng);
    const CluesIds ids = register_clue_params(f, d, 16, cfg);
    const int emb = ps.add("entity_embeddings", detail::random_matrix(rng, seq.size(), d, 1.0));
    const int states = ps.add("encoder_states", detail::random_matrix(rng, seq.size() + q, d, 1.0));
    Matrix<double> pool = frame_pool_matrix<double>(seq);
    auto key_mask = std::make_shared<const Mask>(clue_key_mask(seq, q, cfg.num_clues, cfg.fine_grained_source));
    Matrix<double> r = detail::random_matrix(rng, cfg.num_clues, d, 1.0);
    const Eigen::Index L = seq.size();
    loss = [=](Tape<double>& t) {
      Var global = frame_global_features(t, t.param(emb), t.constant(pool), ids);
      Var fixed = project_fixed_length(t, global, cfg.num_clues, ids);
      Var st = t.param(states);
      Var clues = question_fusion(t, fixed, slice_rows(t, st, L, q), ids, heads);
      return weighted_sum(t, scene_text_interaction(t, clues, st, key_mask, ids, heads), r);
    };
  } else if (selector == "full_model") {
    const VideoSample sample = detail::grad_check_sample(rng);
    ModelConfig cfg;
    cfg.d = 8;
    cfg.d_z = 4;
    cfg.heads = 2;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.ff_width = 16;
    cfg.text_slots = 2;
    cfg.object_slots = 1;
    cfg.relpos_buckets = 8;
    cfg.relpos_max_distance = 16;
    cfg.spatial.d_s = 4;
    cfg.adapter.reduction = 2;
    cfg.clues.num_clues = 2;
    cfg.clues.layers = 1;
    auto model = std::make_shared<Model<double>>(cfg, TokenVocab::build({sample}), seed);
    // Open the zero-initialised adapter branch so every tensor gets a gradient.
    auto& mp = model->params();
    for (int i = 0; i < mp.size(); ++i) {
      if (mp.name(i).ends_with("adapter.up")) mp.value(i) = detail::random_matrix(rng, mp.value(i).rows(), mp.value(i).cols(), 0.5);
      if (mp.name(i).starts_with("spatial.")) mp.value(i) *= 20.0;
    }
    auto prepared = std::make_shared<const Model<double>::Prepared>(model->prepare(sample));
    max_per_tensor = 24;
    GradCheckReport r;
    loss = [model, prepared](Tape<double>& t) { return model->loss_on(t, *prepared); };
    r = compare_gradients(mp, loss, step, rng, max_per_tensor);
    r.selector = selector;
    return r;
  } else {
    throw std::invalid_argument("unknown grad-check selector '" + selector + "'");
  }
  GradCheckReport r = compare_gradients(ps, loss, step, rng, max_per_tensor);
  r.selector = selector;
  return r;
}

}  // namespace tea
