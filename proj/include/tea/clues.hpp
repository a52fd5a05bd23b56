#pragma once

// Scene-text-aware clue aggregation: per-frame global context is pooled into
// G fixed slots, fused with the question by self-attention, then refined by
// N rounds of (self-attention, cross-attention into scene-text states, FFN).

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tea/layers.hpp"

namespace tea {

enum class FineGrainedSource { SceneText, SceneTextAndObjects };
enum class GlobalFeatureSource { PooledEntities, ExternalFile };

struct CluesConfig {
  int num_clues = 8;  ///< G
  int layers = 2;     ///< N self+cross blocks
  FineGrainedSource fine_grained_source = FineGrainedSource::SceneText;
  GlobalFeatureSource global_feature_source = GlobalFeatureSource::PooledEntities;
  int external_dim = 0;  ///< d_g, required for ExternalFile

  void validate() const {
    if (num_clues < 1) throw std::invalid_argument("clues: G must be >= 1");
    if (layers < 1) throw std::invalid_argument("clues: N must be >= 1");
    if (global_feature_source == GlobalFeatureSource::ExternalFile && external_dim < 1) {
      throw std::invalid_argument("clues: external frame features need external_dim >= 1");
    }
  }
};

struct CluesIds {
  int frame_proj = -1;  ///< d x d (pooled) or d_g x d (external)
  int proj = -1;        ///< d x d after fixed-length pooling
  AttentionBlockIds fusion_attn;
  FeedForwardIds fusion_ff;
  std::vector<AttentionBlockIds> self_attn;
  std::vector<AttentionBlockIds> cross_attn;
  std::vector<FeedForwardIds> ff;
  int final_norm = -1;
};

template <typename Scalar>
CluesIds register_clue_params(ParamFactory<Scalar>& f, int d, int ff_width, const CluesConfig& cfg) {
  cfg.validate();
  CluesIds ids;
  const int in = cfg.global_feature_source == GlobalFeatureSource::ExternalFile ? cfg.external_dim : d;
  ids.frame_proj = f.linear("clues.frame_proj", in, d);
  ids.proj = f.linear("clues.proj", d, d);
  ids.fusion_attn = f.attention("clues.fusion.attn", d);
  ids.fusion_ff = f.feed_forward("clues.fusion.ff", d, ff_width);
  for (int n = 0; n < cfg.layers; ++n) {
    const std::string p = "clues." + std::to_string(n);
    ids.self_attn.push_back(f.attention(p + ".self", d));
    ids.cross_attn.push_back(f.attention(p + ".cross", d));
    ids.ff.push_back(f.feed_forward(p + ".ff", d, ff_width));
  }
  ids.final_norm = f.ones("clues.final_norm", d);
  return ids;
}

/// G x T adaptive average pooling: bin b averages frames floor(bT/G) .. ceil((b+1)T/G)-1.
template <typename Scalar>
Matrix<Scalar> adaptive_pool_matrix(int frames, int bins) {
  if (frames < 1 || bins < 1) throw std::invalid_argument("adaptive_pool_matrix: need T, G >= 1");
  Matrix<Scalar> p = Matrix<Scalar>::Zero(bins, frames);
  for (int b = 0; b < bins; ++b) {
    const int start = (b * frames) / bins;
    const int end = ((b + 1) * frames + bins - 1) / bins;
    for (int t = start; t < end; ++t) p(b, t) = Scalar(1) / Scalar(end - start);
  }
  return p;
}

/// T x L matrix averaging the real entity slots of each frame. Frames with no
/// real slot get a zero row and are listed in `empty_frames`.
template <typename Scalar>
Matrix<Scalar> frame_pool_matrix(const EntitySequence& seq, std::vector<int>* empty_frames = nullptr) {
  Matrix<Scalar> p = Matrix<Scalar>::Zero(seq.num_frames, seq.size());
  std::vector<int> count(seq.num_frames, 0);
  for (const auto& slot : seq.slots) {
    if (!slot.is_padding()) ++count[slot.frame_index];
  }
  for (int i = 0; i < seq.size(); ++i) {
    const auto& slot = seq.slots[i];
    if (!slot.is_padding()) p(slot.frame_index, i) = Scalar(1) / Scalar(count[slot.frame_index]);
  }
  if (empty_frames != nullptr) {
    for (int t = 0; t < seq.num_frames; ++t) {
      if (count[t] == 0) empty_frames->push_back(t);
    }
  }
  return p;
}

/// Key mask (G x total) letting clues read the eligible entity slots only.
inline Mask clue_key_mask(const EntitySequence& seq, int question_len, int clues, FineGrainedSource source) {
  const int total = seq.size() + question_len;
  Mask m = Mask::Constant(clues, total, false);
  bool any = false;
  for (int j = 0; j < seq.size(); ++j) {
    const auto& slot = seq.slots[j];
    const bool ok = !slot.is_padding() && (slot.is_scene_text || source == FineGrainedSource::SceneTextAndObjects);
    if (ok) {
      m.col(j).setConstant(true);
      any = true;
    }
  }
  if (!any) throw ad::MaskError("clues: no eligible entity slot for cross-attention");
  return m;
}

/// T x d per-frame global features: pooled entity embeddings or external
/// features, linearly projected to width d.
template <typename Scalar>
ad::Var frame_global_features(ad::Tape<Scalar>& t, ad::Var source, ad::Var pool, const CluesIds& ids) {
  ad::Var pooled = pool.valid() ? ad::matmul(t, pool, source) : source;
  return ad::matmul(t, pooled, t.param(ids.frame_proj));
}

/// G x d: adaptive average pooling over frames followed by a learned projection.
template <typename Scalar>
ad::Var project_fixed_length(ad::Tape<Scalar>& t, ad::Var global, int clues, const CluesIds& ids) {
  const auto frames = static_cast<int>(t.value(global).rows());
  ad::Var bins = t.constant(adaptive_pool_matrix<Scalar>(frames, clues));
  return ad::matmul(t, ad::matmul(t, bins, global), t.param(ids.proj));
}

/// Self-attention over [global; question], returning the first G rows.
/// `question` may be an invalid Var for an empty question.
template <typename Scalar>
ad::Var question_fusion(ad::Tape<Scalar>& t, ad::Var global, ad::Var question, const CluesIds& ids, int heads,
                        ad::AttentionRecord<Scalar>* record = nullptr) {
  const Eigen::Index g = t.value(global).rows();
  ad::Var x = question.valid() && t.value(question).rows() > 0 ? ad::concat_rows(t, {global, question}) : global;
  const Eigen::Index n = t.value(x).rows();
  auto open = std::make_shared<const Mask>(Mask::Constant(n, n, true));
  x = self_attention_block(t, x, ids.fusion_attn, heads, ad::Var{}, open, record);
  x = feed_forward_block(t, x, ids.fusion_ff);
  return ad::slice_rows(t, x, 0, g);
}

/// N rounds of clue self-attention, cross-attention into the entity states
/// allowed by `key_mask`, and feed-forward. Returns normalized G x d clues.
template <typename Scalar>
ad::Var scene_text_interaction(ad::Tape<Scalar>& t, ad::Var clues, ad::Var states,
                               std::shared_ptr<const Mask> key_mask, const CluesIds& ids, int heads,
                               std::vector<ad::AttentionRecord<Scalar>>* records = nullptr) {
  const Eigen::Index g = t.value(clues).rows();
  auto open = std::make_shared<const Mask>(Mask::Constant(g, g, true));
  if (records != nullptr) records->assign(ids.cross_attn.size(), {});
  for (std::size_t n = 0; n < ids.cross_attn.size(); ++n) {
    clues = self_attention_block(t, clues, ids.self_attn[n], heads, ad::Var{}, open);
    clues = cross_attention_block(t, clues, states, ids.cross_attn[n], heads, key_mask,
                                  records != nullptr ? &(*records)[n] : nullptr);
    clues = feed_forward_block(t, clues, ids.ff[n]);
  }
  return ad::rms_norm(t, clues, t.param(ids.final_norm));
}

}  // namespace tea
