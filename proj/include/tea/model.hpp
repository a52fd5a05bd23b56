#pragma once

// Miniature encoder-decoder over [entities; question] with additive spatial
// and relative-position attention bias, temporal adapters after every encoder
// self-attention, optional clue tokens prepended to the decoder memory, and
// tied input/output embeddings.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tea/autodiff.hpp"
#include "tea/clues.hpp"
#include "tea/entities.hpp"
#include "tea/layers.hpp"
#include "tea/spatial_bias.hpp"
#include "tea/temporal_adapter.hpp"
#include "tea/vocab.hpp"

namespace tea {

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int d = 64;
  int d_z = 16;
  int heads = 4;
  int encoder_layers = 4;
  int decoder_layers = 2;
  int ff_width = 256;
  int vocab_size = 0;  ///< taken from the vocabulary when 0
  int max_answer_len = 8;
  int max_input_len = 512;
  int text_slots = 12;   ///< M
  int object_slots = 4;  ///< N
  int relpos_buckets = 32;
  int relpos_max_distance = 128;
  bool frame_local_attention = true;
  double dropout = 0.0;

  bool enable_spatial_bias = true;
  bool enable_temporal_adapter = true;
  bool enable_clues = true;
  bool per_layer_spatial_bias = false;

  SpatialBiasConfig spatial;
  TemporalAdapterConfig adapter;
  CluesConfig clues;

  void validate() const {
    if (d != heads * d_z) throw ConfigurationError("model: d must equal heads * d_z");
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigurationError("model: need >= 1 layer per stack");
    if (ff_width < 1 || max_answer_len < 1) throw ConfigurationError("model: ff_width, max_answer_len >= 1");
    if (text_slots < 1 || object_slots < 0) throw ConfigurationError("model: need M >= 1, N >= 0");
    if (relpos_buckets < 4) throw ConfigurationError("model: relpos_buckets >= 4");
    if (dropout != 0.0) throw ConfigurationError("model: only dropout = 0 is supported");
    spatial.validate();
    adapter.validate(d);
    clues.validate();
  }
};

/// Cross-attention of the decoder's last layer at each generated position.
struct GenerationTrace {
  std::vector<std::vector<double>> cross_weights;  ///< per step, head-averaged, memory length
  std::vector<Matrix<double>> clue_weights;        ///< per clue layer, G x (L+q), head-averaged
  int num_clues = 0;
  int entity_len = 0;
  int question_len = 0;
};

template <typename Scalar>
class Model {
 public:
  using Mat = Matrix<Scalar>;

  /// Per-sample inputs derived once from a VideoSample.
  struct Prepared {
    std::string video_id;
    EntitySequence seq;
    std::vector<std::vector<int>> entity_ids;
    std::vector<int> question_ids;
    std::vector<int> target_ids;  ///< answer tokens followed by EOS
    std::shared_ptr<const SpatialTables<Scalar>> spatial;
    std::shared_ptr<const Mask> encoder_mask;
    std::shared_ptr<const RelativeBuckets> question_buckets;
    std::shared_ptr<const Mask> clue_mask;
    Mat frame_pool;                     ///< T x L
    std::optional<Mat> frame_features;  ///< T x d_g
    std::vector<bool> memory_keep;      ///< per memory row (clues first)
    std::vector<std::string> diagnostics;

    int entity_len() const { return seq.size(); }
    int question_len() const { return static_cast<int>(question_ids.size()); }
    int input_len() const { return entity_len() + question_len(); }
  };

  /// Vars produced by one encoder pass on a tape.
  struct Encoded {
    ad::Var entity_embeddings;
    ad::Var states;  ///< (L+q) x d final encoder output
    ad::Var clues;   ///< G x d, invalid when clues are disabled
    ad::Var memory;  ///< [clues; states]
  };

  Model(ModelConfig cfg, TokenVocab vocab, std::uint64_t seed) : config_(std::move(cfg)), vocab_(std::move(vocab)) {
    if (config_.vocab_size == 0) config_.vocab_size = vocab_.size();
    if (config_.vocab_size != vocab_.size()) throw ConfigurationError("model: vocab_size differs from vocabulary");
    config_.spatial.heads = config_.heads;
    config_.validate();
    std::mt19937_64 rng(seed);
    build(rng);
  }

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const TokenVocab& vocab() const { return vocab_; }
  ad::ParameterSet<Scalar>& params() { return params_; }
  const ad::ParameterSet<Scalar>& params() const { return params_; }

  /// Parameter index by name, e.g. "enc.0.adapter.up".
  int param_index(const std::string& name) const { return params_.index_of(name); }

  Prepared prepare(const VideoSample& sample) const {
    const auto& c = config_;
    Prepared p;
    p.video_id = sample.video_id;
    p.seq = build_entity_sequence(sample, c.text_slots, c.object_slots);
    if (p.seq.truncated > 0) {
      p.diagnostics.push_back("truncated " + std::to_string(p.seq.truncated) + " entities");
    }
    for (const auto& slot : p.seq.slots) p.entity_ids.push_back(vocab_.encode_entity(slot.text));
    p.question_ids = vocab_.encode(sample.question);
    if (p.input_len() > c.max_input_len) {
      throw CapacityError("sample '" + sample.video_id + "': input length " + std::to_string(p.input_len()) +
                          " exceeds " + std::to_string(c.max_input_len));
    }
    if (!sample.answers.empty()) {
      auto ans = vocab_.encode(sample.answers.front());
      if (static_cast<int>(ans.size()) > c.max_answer_len) ans.resize(c.max_answer_len);
      p.target_ids = std::move(ans);
      p.target_ids.push_back(TokenVocab::kEos);
    }
    p.spatial = std::make_shared<const SpatialTables<Scalar>>(spatial_tables<Scalar>(p.seq, c.spatial));
    p.encoder_mask =
        std::make_shared<const Mask>(frame_local_mask(p.seq, p.question_len(), c.frame_local_attention));
    p.question_buckets = std::make_shared<const RelativeBuckets>(
        relative_buckets(p.question_len(), true, c.relpos_buckets, c.relpos_max_distance));
    std::vector<int> empty_frames;
    p.frame_pool = frame_pool_matrix<Scalar>(p.seq, &empty_frames);
    if (sample.frame_features) p.frame_features = sample.frame_features->cast<Scalar>();
    const int g = c.enable_clues ? c.clues.num_clues : 0;
    if (c.enable_clues) {
      p.clue_mask = std::make_shared<const Mask>(
          clue_key_mask(p.seq, p.question_len(), g, c.clues.fine_grained_source));
      if (c.clues.global_feature_source == GlobalFeatureSource::ExternalFile) {
        if (!p.frame_features || p.frame_features->cols() != c.clues.external_dim) {
          throw ValidationError("sample '" + sample.video_id + "': external frame features of width " +
                                std::to_string(c.clues.external_dim) + " required");
        }
      } else {
        for (int t : empty_frames) {
          p.diagnostics.push_back("frame " + std::to_string(t) + " has no entities; zero global feature");
        }
      }
    }
    p.memory_keep.assign(g, true);
    for (const auto& slot : p.seq.slots) p.memory_keep.push_back(!slot.is_padding());
    for (int i = 0; i < p.question_len(); ++i) p.memory_keep.push_back(true);
    return p;
  }

  /// Encoder (and clue) pass. `clue_records` receives clue cross-attention.
  Encoded encode_on(ad::Tape<Scalar>& t, const Prepared& p,
                    std::vector<ad::AttentionRecord<Scalar>>* clue_records = nullptr) const {
    using namespace ad;
    const auto& c = config_;
    const Eigen::Index L = p.entity_len();
    const Eigen::Index q = p.question_len();
    const Eigen::Index total = L + q;
    Var emb = t.param(ids_.embed);
    Encoded out;
    out.entity_embeddings = embed_mean(t, emb, p.entity_ids);
    Var x = out.entity_embeddings;
    if (q > 0) {
      std::vector<std::vector<int>> qids;
      for (int id : p.question_ids) qids.push_back({id});
      x = concat_rows(t, {x, embed_mean(t, emb, std::move(qids))});
    }

    Var relpos;
    if (q > 0) relpos = relative_bias_op(t, t.param(ids_.enc_relpos), p.question_buckets, L, total);
    auto layer_bias = [&](int layer) -> Var {
      Var b = relpos;
      if (c.enable_spatial_bias) {
        const auto& w = c.per_layer_spatial_bias ? ids_.spatial[layer] : ids_.spatial[0];
        Var s = spatial_bias_op(t, p.spatial, {t.param(w[0]), t.param(w[1]), t.param(w[2])}, total);
        b = b.valid() ? add(t, b, s) : s;
      }
      return b;
    };
    Var shared_bias = c.per_layer_spatial_bias ? Var{} : layer_bias(0);
    const GridShape shape{p.seq.num_frames, p.seq.slots_per_frame()};
    for (int l = 0; l < c.encoder_layers; ++l) {
      Var bias = c.per_layer_spatial_bias ? layer_bias(l) : shared_bias;
      x = self_attention_block(t, x, ids_.enc_attn[l], c.heads, bias, p.encoder_mask);
      if (c.enable_temporal_adapter) {
        const auto& a = ids_.adapter[l];
        x = temporal_adapter_op(t, x, {t.param(a.down), t.param(a.kernel), t.param(a.bias), t.param(a.up)}, shape,
                                c.adapter);
      }
      x = feed_forward_block(t, x, ids_.enc_ff[l]);
    }
    out.states = rms_norm(t, x, t.param(ids_.enc_final_norm));
    out.memory = out.states;
    if (c.enable_clues) {
      Var global;
      if (c.clues.global_feature_source == GlobalFeatureSource::ExternalFile) {
        global = frame_global_features(t, t.constant(*p.frame_features), Var{}, ids_.clues);
      } else {
        global = frame_global_features(t, out.entity_embeddings, t.constant(p.frame_pool), ids_.clues);
      }
      Var fixed = project_fixed_length(t, global, c.clues.num_clues, ids_.clues);
      Var question = q > 0 ? slice_rows(t, out.states, L, q) : Var{};
      Var clues = question_fusion(t, fixed, question, ids_.clues, c.heads);
      out.clues = scene_text_interaction(t, clues, out.states, p.clue_mask, ids_.clues, c.heads, clue_records);
      out.memory = concat_rows(t, {out.clues, out.states});
    }
    return out;
  }

  /// Decoder logits (n x vocab) for teacher-forced inputs.
  ad::Var decode_on(ad::Tape<Scalar>& t, const Encoded& enc, const Prepared& p, const std::vector<int>& inputs,
                    ad::AttentionRecord<Scalar>* last_cross = nullptr) const {
    using namespace ad;
    const auto& c = config_;
    const int n = static_cast<int>(inputs.size());
    Var emb = t.param(ids_.embed);
    std::vector<std::vector<int>> ids;
    for (int id : inputs) ids.push_back({id});
    Var y = embed_mean(t, emb, std::move(ids));
    auto buckets = std::make_shared<const RelativeBuckets>(
        relative_buckets(n, false, c.relpos_buckets, c.relpos_max_distance));
    Var bias = relative_bias_op(t, t.param(ids_.dec_relpos), buckets, 0, n);
    auto causal = std::make_shared<const Mask>(causal_mask(n));
    const auto mem_len = static_cast<Eigen::Index>(p.memory_keep.size());
    if (t.value(enc.memory).rows() != mem_len) throw std::logic_error("decode: memory length mismatch");
    auto cross = std::make_shared<Mask>(n, mem_len);
    for (Eigen::Index j = 0; j < mem_len; ++j) cross->col(j).setConstant(p.memory_keep[j]);
    for (int l = 0; l < c.decoder_layers; ++l) {
      y = self_attention_block(t, y, ids_.dec_self[l], c.heads, bias, causal);
      y = cross_attention_block(t, y, enc.memory, ids_.dec_cross[l], c.heads, cross,
                                l + 1 == c.decoder_layers ? last_cross : nullptr);
      y = feed_forward_block(t, y, ids_.dec_ff[l]);
    }
    y = rms_norm(t, y, t.param(ids_.dec_final_norm));
    return scale(t, matmul_nt(t, y, emb), Scalar(1) / std::sqrt(Scalar(c.d)));
  }

  /// Summed teacher-forced cross-entropy of the sample's target tokens.
  ad::Var loss_on(ad::Tape<Scalar>& t, const Prepared& p) const {
    if (p.target_ids.empty()) throw std::invalid_argument("sample '" + p.video_id + "' has no target");
    std::vector<int> inputs{TokenVocab::kBos};
    inputs.insert(inputs.end(), p.target_ids.begin(), p.target_ids.end() - 1);
    const Encoded enc = encode_on(t, p);
    return ad::cross_entropy_sum(t, decode_on(t, enc, p, inputs), p.target_ids);
  }

  /// Final encoder states, (L+q) x d.
  Mat encode(const Prepared& p) const {
    ad::Tape<Scalar> t(&params_);
    t.set_track_params(false);
    return t.value(encode_on(t, p).states);
  }

  /// Greedy decoding from BOS until EOS or max_answer_len tokens.
  std::vector<int> generate(const Prepared& p, GenerationTrace* trace = nullptr) const {
    ad::Tape<Scalar> t(&params_);
    t.set_track_params(false);
    std::vector<ad::AttentionRecord<Scalar>> clue_records;
    const Encoded enc = encode_on(t, p, trace != nullptr ? &clue_records : nullptr);
    if (trace != nullptr) {
      *trace = GenerationTrace{};
      trace->num_clues = config_.enable_clues ? config_.clues.num_clues : 0;
      trace->entity_len = p.entity_len();
      trace->question_len = p.question_len();
      for (const auto& rec : clue_records) trace->clue_weights.push_back(head_average(rec, 0, -1));
    }
    std::vector<int> inputs{TokenVocab::kBos};
    std::vector<int> out;
    while (static_cast<int>(out.size()) < config_.max_answer_len) {
      ad::AttentionRecord<Scalar> rec;
      ad::Var logits = decode_on(t, enc, p, inputs, trace != nullptr ? &rec : nullptr);
      const auto& z = t.value(logits);
      Eigen::Index best = 0;
      z.row(z.rows() - 1).maxCoeff(&best);
      if (trace != nullptr) {
        Matrix<double> avg = head_average(rec, static_cast<Eigen::Index>(inputs.size()) - 1, 1);
        trace->cross_weights.emplace_back(avg.data(), avg.data() + avg.size());
      }
      if (best == TokenVocab::kEos) break;
      out.push_back(static_cast<int>(best));
      inputs.push_back(static_cast<int>(best));
    }
    return out;
  }

  std::string generate_text(const Prepared& p, GenerationTrace* trace = nullptr) const {
    return vocab_.decode(generate(p, trace));
  }

 private:
  struct AdapterIds {
    int down = -1, kernel = -1, bias = -1, up = -1;
  };
  struct Ids {
    int embed = -1;
    std::vector<AttentionBlockIds> enc_attn;
    std::vector<AdapterIds> adapter;
    std::vector<FeedForwardIds> enc_ff;
    int enc_final_norm = -1;
    int enc_relpos = -1;
    std::vector<std::array<int, kNumGranularities>> spatial;
    CluesIds clues;
    std::vector<AttentionBlockIds> dec_self;
    std::vector<AttentionBlockIds> dec_cross;
    std::vector<FeedForwardIds> dec_ff;
    int dec_final_norm = -1;
    int dec_relpos = -1;
  };

  /// Rows [row, row+count) of the head-averaged weights (count -1: all rows).
  static Matrix<double> head_average(const ad::AttentionRecord<Scalar>& rec, Eigen::Index row, Eigen::Index count) {
    const auto& first = rec.weights.at(0);
    if (count < 0) count = first.rows() - row;
    Matrix<double> avg = Matrix<double>::Zero(count, first.cols());
    for (const auto& w : rec.weights) avg += w.middleRows(row, count).template cast<double>();
    return avg / static_cast<double>(rec.weights.size());
  }

  void build(std::mt19937_64& rng) {
    const auto& c = config_;
    ParamFactory<Scalar> f(params_, rng);
    ids_.embed = f.normal("embed", c.vocab_size, c.d, 1.0);
    ids_.enc_relpos = f.normal("enc.relpos", c.relpos_buckets, c.heads, 0.02);
    const int spatial_sets = c.per_layer_spatial_bias ? c.encoder_layers : 1;
    const char* gran[] = {"word", "line", "para"};
    for (int s = 0; s < spatial_sets; ++s) {
      std::array<int, kNumGranularities> w{};
      const std::string prefix = c.per_layer_spatial_bias ? "enc." + std::to_string(s) + ".spatial." : "spatial.";
      for (int g = 0; g < kNumGranularities; ++g) {
        w[g] = f.normal(prefix + gran[g], c.spatial.feature_dim(), c.heads, c.spatial.init_std);
      }
      ids_.spatial.push_back(w);
    }
    const int ch = c.d / c.adapter.reduction;
    const int taps = c.adapter.taps();
    for (int l = 0; l < c.encoder_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      ids_.enc_attn.push_back(f.attention(p + ".attn", c.d));
      AdapterIds a;
      a.down = f.linear(p + ".adapter.down", c.d, ch);
      const int fan_in = c.adapter.depthwise ? taps : ch * taps;
      a.kernel = f.normal(p + ".adapter.kernel", ch, c.adapter.depthwise ? taps : ch * taps,
                          1.0 / std::sqrt(static_cast<double>(fan_in)));
      a.bias = f.zeros(p + ".adapter.bias", 1, ch);
      a.up = f.zeros(p + ".adapter.up", ch, c.d);
      ids_.adapter.push_back(a);
      ids_.enc_ff.push_back(f.feed_forward(p + ".ff", c.d, c.ff_width));
    }
    ids_.enc_final_norm = f.ones("enc.final_norm", c.d);
    ids_.clues = register_clue_params(f, c.d, c.ff_width, c.clues);
    ids_.dec_relpos = f.normal("dec.relpos", c.relpos_buckets, c.heads, 0.02);
    for (int l = 0; l < c.decoder_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      ids_.dec_self.push_back(f.attention(p + ".self", c.d));
      ids_.dec_cross.push_back(f.attention(p + ".cross", c.d));
      ids_.dec_ff.push_back(f.feed_forward(p + ".ff", c.d, c.ff_width));
    }
    ids_.dec_final_norm = f.ones("dec.final_norm", c.d);
  }

  ModelConfig config_;
  TokenVocab vocab_;
  ad::ParameterSet<Scalar> params_;
  Ids ids_;
};

}  // namespace tea
