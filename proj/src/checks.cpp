#include "tea/checks.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "tea/checkpoint.hpp"
#include "tea/evaluation.hpp"
#include "tea/grad_check.hpp"
#include "tea/model.hpp"

namespace tea {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

CheckResult make(const std::string& name, bool ok, const std::string& detail = {}) { return {name, ok, detail}; }

/// Random sample with up to `max_text` texts and `max_obj` objects per frame.
VideoSample random_sample(std::mt19937_64& rng, int frames, int max_text, int max_obj) {
  std::uniform_real_distribution<double> u(0.0, 0.8);
  std::uniform_int_distribution<int> nt(0, max_text), no(0, max_obj);
  const char* words[] = {"exit", "stop", "45", "cargo", "west", "area", "bus", "car"};
  VideoSample s;
  s.video_id = "check";
  s.num_frames = frames;
  s.question = "what is the sign";
  s.answers = {"stop"};
  int line = 0;
  for (int f = 0; f < frames; ++f) {
    const int n = nt(rng);
    for (int k = 0; k < n; ++k) {
      VisualEntity e;
      e.text = words[(f + k) % 8];
      e.frame_index = f;
      const double x = u(rng), y = u(rng);
      e.word_box = {x, y, x + 0.1, y + 0.05};
      e.line_box = BoundingBox{x, y, x + 0.15, y + 0.05};
      e.para_box = BoundingBox{x, y, x + 0.2, y + 0.15};
      e.line_id = line++;
      s.entities.push_back(e);
    }
    const int m = no(rng);
    for (int k = 0; k < m; ++k) {
      VisualEntity o;
      o.kind = EntityKind::Object;
      o.text = "car";
      o.frame_index = f;
      const double x = u(rng), y = u(rng);
      o.word_box = {x, y, x + 0.2, y + 0.2};
      s.entities.push_back(o);
    }
  }
  return s;
}

void grad(std::vector<CheckResult>& out, const std::string& selector, double tol, std::uint64_t seed) {
  const auto r = grad_check(selector, seed);
  out.push_back(make("grad-" + selector, r.max_rel_error < tol,
                     "max rel error " + fmt(r.max_rel_error) + " at " + r.worst_param));
}

std::vector<CheckResult> entities_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  bool length_ok = true, order_ok = true, pad_ok = true, determ_ok = true;
  for (int n = 0; n < 50; ++n) {
    const auto s = random_sample(rng, 1 + n % 5, 6, 3);
    const auto seq = build_entity_sequence(s, 4, 2);
    length_ok = length_ok && seq.size() == s.num_frames * 6;
    const auto again = build_entity_sequence(s, 4, 2);
    for (int i = 0; i < seq.size(); ++i) {
      const auto& a = seq.slots[i];
      determ_ok = determ_ok && a.entity == again.slots[i].entity;
      if (a.is_padding()) pad_ok = pad_ok && a.word_box == BoundingBox{} && a.text == kPadText;
      if (i + 1 < seq.size() && !a.is_padding() && !seq.slots[i + 1].is_padding() &&
          a.frame_index == seq.slots[i + 1].frame_index && a.is_scene_text == seq.slots[i + 1].is_scene_text) {
        order_ok = order_ok && !reading_order_less(s.entities[seq.slots[i + 1].entity], s.entities[a.entity]);
      }
    }
  }
  return {make("sequence-length", length_ok), make("reading-order", order_ok), make("padding-slots", pad_ok),
          make("deterministic-slots", determ_ok)};
}

std::vector<CheckResult> spatial_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SpatialBiasConfig cfg;
  std::vector<CheckResult> out;
  double translation = 0.0, oracle = 0.0;
  bool pad_zero = true;
  for (int n = 0; n < 50; ++n) {
    auto s = random_sample(rng, 1 + n % 3, 3, 2);
    const auto params = SpatialBiasParams<double>::random(cfg, rng);
    const auto seq = build_entity_sequence(s, 3, 1);
    const auto bias = bias_tensor(seq, params);
    // Shift within range and compare.
    double max_x = 0.0, max_y = 0.0;
    for (const auto& e : s.entities) {
      max_x = std::max({max_x, e.word_box.x_br, e.line_box ? e.line_box->x_br : 0.0, e.para_box ? e.para_box->x_br : 0.0});
      max_y = std::max({max_y, e.word_box.y_br, e.line_box ? e.line_box->y_br : 0.0, e.para_box ? e.para_box->y_br : 0.0});
    }
    const double dx = (1.0 - max_x) * 0.7, dy = (1.0 - max_y) * 0.3;
    for (auto& e : s.entities) {
      e.word_box = e.word_box.translated(dx, dy);
      if (e.line_box) e.line_box = e.line_box->translated(dx, dy);
      if (e.para_box) e.para_box = e.para_box->translated(dx, dy);
    }
    const auto shifted = bias_tensor(build_entity_sequence(s, 3, 1), params);
    for (int h = 0; h < cfg.heads; ++h) {
      translation = std::max(translation, (bias.values[h] - shifted.values[h]).cwiseAbs().maxCoeff());
      for (int i = 0; i < seq.size(); ++i) {
        for (int j = 0; j < seq.size(); ++j) {
          const auto& a = seq.slots[i];
          const auto& b = seq.slots[j];
          double expect = 0.0;
          if (!a.is_padding() && !b.is_padding()) {
            expect = pair_bias(a.word_box, b.word_box, params.projection[0], cfg)(h);
            if (a.is_scene_text && b.is_scene_text) {
              expect += pair_bias(*a.line_box, *b.line_box, params.projection[1], cfg)(h);
              expect += pair_bias(*a.para_box, *b.para_box, params.projection[2], cfg)(h);
            }
          } else {
            pad_zero = pad_zero && bias(h, i, j) == 0.0;
          }
          oracle = std::max(oracle, std::abs(expect - bias(h, i, j)));
        }
      }
    }
  }
  out.push_back(make("translation-invariance", translation <= 1e-6, "max change " + fmt(translation)));
  out.push_back(make("pairwise-oracle", oracle <= 1e-9, "max diff " + fmt(oracle)));
  out.push_back(make("padding-zero", pad_zero));
  bool mirror = true;
  for (double d : {0.013, 0.27, -0.6}) {
    const auto a = sinusoidal_features(d, cfg, SinusoidKind::Sin);
    const auto b = sinusoidal_features(-d, cfg, SinusoidKind::Sin);
    const auto c = sinusoidal_features(d, cfg, SinusoidKind::Cos);
    const auto e = sinusoidal_features(-d, cfg, SinusoidKind::Cos);
    mirror = mirror && (a + b).cwiseAbs().maxCoeff() < 1e-12 && (c - e).cwiseAbs().maxCoeff() < 1e-12;
  }
  out.push_back(make("mirror-symmetry", mirror));
  grad(out, "spatial_bias", 1e-4, seed);
  grad(out, "spatial_bias_all_phases", 1e-4, seed);
  return out;
}

std::vector<CheckResult> adapter_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  double identity = 0.0;
  for (int n = 0; n < 100; ++n) {
    const int T = 1 + n % 6, S = 1 + (n * 7) % 12;
    const int d = 8 * (1 + n % 8);
    TemporalAdapterConfig cfg;
    const auto p = TemporalAdapterParams<double>::init(d, cfg, rng);
    Matrix<double> v = detail::random_matrix(rng, T * S, d, 1.0);
    EntityGrid<double> grid(v, GridShape{T, S});
    identity = std::max(identity, (temporal_conv_forward(grid, p).flat() - v).cwiseAbs().maxCoeff());
  }
  out.push_back(make("identity-at-init", identity <= 1e-12, "max diff " + fmt(identity)));

  // Single-cell perturbation only reaches its 3x3 neighbourhood.
  TemporalAdapterConfig cfg;
  auto p = TemporalAdapterParams<double>::init(8, cfg, rng);
  p.up = detail::random_matrix(rng, p.up.rows(), p.up.cols(), 1.0);
  p.bias.setZero();
  const GridShape shape{5, 4};
  Matrix<double> zero = Matrix<double>::Zero(shape.rows(), 8);
  Matrix<double> one = zero;
  one.row(shape.row(2, 1)).setOnes();
  const Matrix<double> y = temporal_conv_forward(EntityGrid<double>(one, shape), p).flat() - one;
  bool local = true;
  for (int t = 0; t < shape.frames; ++t) {
    for (int s = 0; s < shape.slots; ++s) {
      const bool inside = std::abs(t - 2) <= 1 && std::abs(s - 1) <= 1;
      if (!inside) local = local && y.row(shape.row(t, s)).cwiseAbs().maxCoeff() == 0.0;
    }
  }
  out.push_back(make("locality", local));
  const auto g = temporal_conv_backward(EntityGrid<double>(one, shape), zero, p);
  const bool zero_up = g.input.isZero(0) && g.down.isZero(0) && g.kernel.isZero(0) && g.bias.isZero(0) && g.up.isZero(0);
  out.push_back(make("zero-upstream", zero_up));
  grad(out, "temporal_adapter", 1e-4, seed);
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.d = 16;
  c.d_z = 4;
  c.heads = 4;
  c.encoder_layers = 2;
  c.decoder_layers = 1;
  c.ff_width = 32;
  c.text_slots = 3;
  c.object_slots = 1;
  c.clues.num_clues = 3;
  c.clues.layers = 1;
  return c;
}

std::vector<CheckResult> encoder_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  auto s = random_sample(rng, 3, 3, 1);
  s.entities.push_back(VisualEntity{EntityKind::SceneText, "exit", 0, {0.1, 0.1, 0.2, 0.2}, BoundingBox{0.1, 0.1, 0.2, 0.2},
                                    BoundingBox{0.1, 0.1, 0.2, 0.2}, {}, {}, {}});
  ModelConfig cfg = tiny_config();
  Model<double> model(cfg, TokenVocab::build({s}), seed);
  const auto prep = model.prepare(s);

  // Mask count on an unpadded sequence.
  EntitySequence full;
  full.num_frames = 3;
  full.text_slots = 2;
  full.object_slots = 1;
  for (int f = 0; f < 3; ++f) {
    for (int k = 0; k < 3; ++k) full.slots.push_back({k, f, k < 2, "x", {}, {}, {}});
  }
  const Mask m = frame_local_mask(full, 0);
  out.push_back(make("frame-local-pair-count", m.count() == 3 * 9, std::to_string(m.count()) + " pairs"));

  // Attention rows are distributions with exact zeros at masked keys.
  GenerationTrace trace;
  const auto tokens = model.generate(prep, &trace);
  bool rows_ok = !trace.cross_weights.empty();
  for (const auto& w : trace.cross_weights) {
    double sum = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      sum += w[j];
      if (!prep.memory_keep[j]) rows_ok = rows_ok && w[j] == 0.0;
    }
    rows_ok = rows_ok && std::abs(sum - 1.0) <= 1e-6;
  }
  out.push_back(make("attention-rows", rows_ok));

  bool determ = true;
  for (int r = 0; r < 10; ++r) determ = determ && model.generate(prep) == tokens;
  out.push_back(make("greedy-determinism", determ));

  // Cross-frame leakage with adapters at init, zero spatial bias, empty question.
  {
    VideoSample q = s;
    q.question.clear();
    ModelConfig c2 = cfg;
    c2.enable_clues = false;
    Model<double> m2(c2, TokenVocab::build({s}), seed);
    for (const char* g : {"spatial.word", "spatial.line", "spatial.para"}) m2.params().value(m2.param_index(g)).setZero();
    const auto base = m2.encode(m2.prepare(q));
    VideoSample moved = q;
    for (auto& e : moved.entities) {
      if (e.frame_index == 1) e.text = e.text == "exit" ? "stop" : "exit";
    }
    const auto after = m2.encode(m2.prepare(moved));
    const int per = c2.text_slots + c2.object_slots;
    double leak = 0.0;
    for (int i = 0; i < base.rows(); ++i) {
      if (i / per != 1) leak = std::max(leak, (base.row(i) - after.row(i)).cwiseAbs().maxCoeff());
    }
    out.push_back(make("no-cross-frame-leakage", leak <= 1e-12, "max diff " + fmt(leak)));
  }

  // Checkpoint round trip.
  {
    Model<float> mf(cfg, TokenVocab::build({s}), seed + 1);
    const auto path = (std::filesystem::temp_directory_path() / ("tea_check_" + std::to_string(seed) + ".ckpt")).string();
    save_checkpoint(mf, path);
    const auto back = load_checkpoint<float>(path);
    std::filesystem::remove(path);
    bool same = back.params().size() == mf.params().size();
    for (int i = 0; same && i < mf.params().size(); ++i) {
      same = std::memcmp(back.params().value(i).data(), mf.params().value(i).data(),
                         sizeof(float) * mf.params().value(i).size()) == 0;
    }
    same = same && back.generate(back.prepare(s)) == mf.generate(mf.prepare(s));
    out.push_back(make("checkpoint-round-trip", same));
  }
  grad(out, "attention", 1e-4, seed);
  grad(out, "attention_blocks", 1e-4, seed);
  grad(out, "feed_forward", 1e-4, seed);
  grad(out, "full_model", 1e-3, seed);
  return out;
}

std::vector<CheckResult> clues_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  bool shapes = true;
  for (int T : {1, 2, 5, 8, 16}) {
    for (int qlen : {0, 1, 7, 32}) {
      auto s = random_sample(rng, T, 2, 1);
      s.entities.push_back(VisualEntity{EntityKind::SceneText, "exit", 0, {0.1, 0.1, 0.2, 0.2},
                                        BoundingBox{0.1, 0.1, 0.2, 0.2}, BoundingBox{0.1, 0.1, 0.2, 0.2}, {}, {}, {}});
      s.question.clear();
      for (int k = 0; k < qlen; ++k) s.question += k % 2 ? " exit" : " stop";
      ModelConfig cfg = tiny_config();
      cfg.encoder_layers = 1;
      Model<double> m(cfg, TokenVocab::build({s}), seed);
      const auto prep = m.prepare(s);
      ad::Tape<double> t(&m.params());
      t.set_track_params(false);
      const auto enc = m.encode_on(t, prep);
      shapes = shapes && t.value(enc.clues).rows() == cfg.clues.num_clues &&
               t.value(enc.memory).rows() == cfg.clues.num_clues + prep.input_len();
    }
  }
  out.push_back(make("clue-shapes", shapes));
  std::vector<int> empty;
  const auto pool = adaptive_pool_matrix<double>(5, 8);
  bool bins = true;
  for (int b = 0; b < 8; ++b) {
    const int start = (b * 5) / 8;
    const int end = static_cast<int>(std::ceil((b + 1) * 5.0 / 8.0));
    for (int t = 0; t < 5; ++t) {
      const double expect = t >= start && t < end ? 1.0 / (end - start) : 0.0;
      bins = bins && std::abs(pool(b, t) - expect) < 1e-15;
    }
  }
  out.push_back(make("adaptive-binning", bins));
  grad(out, "clues", 1e-4, seed);
  return out;
}

std::vector<CheckResult> evaluation_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  std::uniform_int_distribution<int> len(0, 8), ch(0, 2);
  auto rand_str = [&] {
    std::string s(len(rng), 'a');
    for (char& c : s) c = static_cast<char>('a' + ch(rng));
    return s;
  };
  bool metric = true;
  for (int n = 0; n < 300; ++n) {
    const auto a = rand_str(), b = rand_str(), c = rand_str();
    const int ab = levenshtein(a, b);
    metric = metric && ab == levenshtein(b, a) && (ab == 0) == (a == b) && levenshtein(a, c) <= ab + levenshtein(b, c);
  }
  out.push_back(make("levenshtein-metric", metric));
  const bool examples = levenshtein("kitten", "sitting") == 3 && levenshtein("", "abc") == 3 &&
                        std::abs(anls_score("spead", {"speed"}) - 0.8) < 1e-12 && anls_score("abc", {"xyz"}) == 0.0 &&
                        vqa_accuracy("speed-limit", {"speed limit"}) == 1 && vqa_accuracy("45", {"45 mph"}) == 0;
  out.push_back(make("metric-examples", examples));
  return out;
}

}  // namespace

const std::vector<std::string>& check_modules() {
  static const std::vector<std::string> m{"entities",          "spatial_bias", "temporal_adapter",
                                          "encoder_decoder",   "clues_aggregation", "evaluation"};
  return m;
}

std::vector<CheckResult> run_checks(const std::string& module, std::uint64_t seed) {
  if (module == "all") {
    std::vector<CheckResult> all;
    for (const auto& m : check_modules()) {
      for (auto& r : run_checks(m, seed)) {
        r.name = m + "/" + r.name;
        all.push_back(std::move(r));
      }
    }
    return all;
  }
  if (module == "entities") return entities_checks(seed);
  if (module == "spatial_bias") return spatial_checks(seed);
  if (module == "temporal_adapter") return adapter_checks(seed);
  if (module == "encoder_decoder") return encoder_checks(seed);
  if (module == "clues_aggregation") return clues_checks(seed);
  if (module == "evaluation") return evaluation_checks(seed);
  throw std::invalid_argument("unknown check module '" + module + "'");
}

}  // namespace tea
