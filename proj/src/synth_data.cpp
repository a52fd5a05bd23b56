#include "tea/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tea {

namespace {

constexpr double kLineHeight = 0.05;
constexpr int kMaxAttempts = 200;
constexpr int kAnchorPool = 16;

const std::set<std::string>& template_words() {
  static const std::set<std::string> w{"what",  "is",    "the",     "leftmost", "rightmost", "topmost",
                                       "bottommost", "text", "above", "below",  "written",   "next",
                                       "to",    "word",  "pad",     "unk",      "s",         "sep"};
  return w;
}

const std::vector<std::string>& object_labels() {
  static const std::vector<std::string> labels{"car", "person", "tree", "bus", "dog", "bicycle", "truck", "bench"};
  return labels;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// `count` distinct random lowercase words, none of them a template word or in `avoid`.
std::vector<std::string> make_pool(std::mt19937_64& rng, int count, int min_len, int max_len,
                                   std::set<std::string> avoid) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < count) {
    const int len = uniform_int(rng, min_len, max_len);
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(alphabet[uniform_int(rng, 0, i == 0 ? 25 : 35)]);
    if (template_words().count(w) || avoid.count(w)) continue;
    avoid.insert(w);
    out.push_back(w);
  }
  return out;
}

std::vector<std::string> anchor_pool(const SynthConfig& cfg) {
  const auto words = synth_word_pool(cfg);
  auto rng = derived_rng(cfg.seed, 0xa11c0);
  std::set<std::string> avoid(words.begin(), words.end());
  for (const auto& l : object_labels()) avoid.insert(l);
  return make_pool(rng, kAnchorPool, 3, 6, avoid);
}

/// k distinct items of `pool`, excluding `avoid`.
std::vector<std::string> draw_distinct(std::mt19937_64& rng, const std::vector<std::string>& pool, int k,
                                       const std::set<std::string>& avoid = {}) {
  std::vector<std::string> c;
  for (const auto& w : pool) {
    if (!avoid.count(w)) c.push_back(w);
  }
  if (static_cast<int>(c.size()) < k) throw std::invalid_argument("synth: word pool too small");
  std::shuffle(c.begin(), c.end(), rng);
  c.resize(k);
  return c;
}

double word_width(const std::string& w) { return 0.03 + 0.012 * static_cast<double>(w.size()); }

VisualEntity text_entity(const std::string& text, int frame, double x, double y, int line_id, int para_id) {
  VisualEntity e;
  e.kind = EntityKind::SceneText;
  e.text = text;
  e.frame_index = frame;
  e.word_box = {x, y, x + word_width(text), y + kLineHeight};
  e.line_id = line_id;
  e.para_id = para_id;
  return e;
}

/// Up to N static object detections.
void add_objects(std::mt19937_64& rng, const SynthConfig& cfg, VideoSample& s) {
  const int count = uniform_int(rng, 0, cfg.object_slots);
  for (int k = 0; k < count; ++k) {
    const auto& label = object_labels()[uniform_int(rng, 0, static_cast<int>(object_labels().size()) - 1)];
    const double w = uniform(rng, 0.1, 0.3), h = uniform(rng, 0.1, 0.3);
    const double x = uniform(rng, 0.0, 1.0 - w), y = uniform(rng, 0.0, 1.0 - h);
    for (int f = 0; f < s.num_frames; ++f) {
      VisualEntity o;
      o.kind = EntityKind::Object;
      o.text = label;
      o.frame_index = f;
      o.word_box = {x, y, x + w, y + h};
      s.entities.push_back(o);
    }
  }
}

std::string make_video_id(const SynthConfig& cfg, int index) {
  std::ostringstream os;
  os << to_string(cfg.task) << '-' << cfg.seed << '-' << index;
  return os.str();
}

/// `count` ascending values in [lo, hi] with neighbouring gaps >= gap.
std::vector<double> spaced_rows(std::mt19937_64& rng, int count, double lo, double hi, double gap) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<double> ys(count);
    for (auto& y : ys) y = uniform(rng, lo, hi);
    std::sort(ys.begin(), ys.end());
    bool ok = true;
    for (int i = 1; i < count; ++i) ok = ok && ys[i] - ys[i - 1] >= gap;
    if (ok) return ys;
  }
  return {};
}

bool h_overlap(const BoundingBox& a, const BoundingBox& b) { return a.x_tl < b.x_br && b.x_tl < a.x_br; }

std::vector<int> texts_in_frame(const VideoSample& s, int frame) {
  std::vector<int> out;
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    const auto& e = s.entities[i];
    if (e.is_scene_text() && e.frame_index == frame) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::string last_word(const std::string& q) {
  const auto pos = q.find_last_of(' ');
  return pos == std::string::npos ? q : q.substr(pos + 1);
}

int first_index(const VideoSample& s, const std::string& text) {
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    if (s.entities[i].is_scene_text() && s.entities[i].text == text) return static_cast<int>(i);
  }
  return -1;
}

// --- spatial -------------------------------------------------------------

const std::vector<std::string>& spatial_relations() {
  static const std::vector<std::string> r{"leftmost", "rightmost", "topmost", "bottommost", "above", "below"};
  return r;
}

std::string spatial_question(const std::string& relation, const std::string& ref) {
  if (relation == "above" || relation == "below") return "what text is " + relation + " " + ref;
  return "what is the " + relation + " text";
}

/// Index into `cands` answering the relation, -1 when undefined. `margin`
/// receives the gap between the best and the runner-up for extremal relations.
int spatial_target(const std::vector<const VisualEntity*>& cands, const std::string& relation,
                   const std::string& ref, double* margin) {
  const int n = static_cast<int>(cands.size());
  if (relation == "above" || relation == "below") {
    int x = -1;
    for (int i = 0; i < n; ++i) {
      if (cands[i]->text == ref) x = i;
    }
    if (x < 0) return -1;
    const auto& bx = cands[x]->word_box;
    int best = -1;
    for (int i = 0; i < n; ++i) {
      const auto& b = cands[i]->word_box;
      if (i == x || !h_overlap(b, bx)) continue;
      const bool ok = relation == "above" ? b.y_br <= bx.y_tl : b.y_tl >= bx.y_br;
      if (!ok) continue;
      if (best < 0 || (relation == "above" ? b.y_tl > cands[best]->word_box.y_tl
                                           : b.y_tl < cands[best]->word_box.y_tl)) {
        best = i;
      }
    }
    if (margin != nullptr) *margin = 1.0;
    return best;
  }
  auto key = [&](int i) {
    const auto& b = cands[i]->word_box;
    if (relation == "leftmost") return b.x_tl;
    if (relation == "rightmost") return -b.x_tl;
    if (relation == "topmost") return b.y_tl;
    return -b.y_tl;
  };
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  if (margin != nullptr) *margin = n > 1 ? key(order[1]) - key(order[0]) : 1.0;
  return n > 0 ? order[0] : -1;
}

std::string spatial_relation_of(const std::string& question, std::string* ref) {
  for (const auto& r : spatial_relations()) {
    if (r == "above" || r == "below") {
      const std::string marker = " " + r + " ";
      const auto pos = question.find(marker);
      if (pos != std::string::npos) {
        *ref = question.substr(pos + marker.size());
        return r;
      }
    } else if (question.find(r) != std::string::npos) {
      return r;
    }
  }
  throw ValidationError("not a spatial-task question: '" + question + "'");
}

VideoSample spatial_sample(const SynthConfig& cfg, const std::vector<std::string>& pool, int index,
                           AnswerKeyEntry& key) {
  auto rng = derived_rng(cfg.seed, static_cast<std::uint64_t>(index));
  const int K = cfg.candidates;
  const int n_rel = K == 1 ? 4 : 6;
  const std::string relation = spatial_relations()[uniform_int(rng, 0, n_rel - 1)];
  const double min_margin = 0.05;
  for (int attempt = 0; attempt < 10 * kMaxAttempts; ++attempt) {
    const auto words = draw_distinct(rng, pool, K);
    const auto ys = spaced_rows(rng, K, 0.02, 0.93, 0.06);
    if (ys.empty()) continue;
    std::vector<int> row(K);
    std::iota(row.begin(), row.end(), 0);
    std::shuffle(row.begin(), row.end(), rng);
    std::vector<double> xs(K);
    for (int k = 0; k < K; ++k) xs[k] = uniform(rng, 0.02, 0.98 - word_width(words[k]));
    std::string ref;
    if (relation == "above" || relation == "below") {
      // Put one candidate in the reference's column on the asked side.
      const int x = uniform_int(rng, 0, K - 1);
      std::vector<int> side;
      for (int k = 0; k < K; ++k) {
        if (k != x && (relation == "above" ? row[k] < row[x] : row[k] > row[x])) side.push_back(k);
      }
      if (side.empty()) continue;
      const int a = side[uniform_int(rng, 0, static_cast<int>(side.size()) - 1)];
      xs[a] = std::clamp(xs[x] + uniform(rng, -0.02, 0.02), 0.0, 0.98 - word_width(words[a]));
      ref = words[x];
    }
    VideoSample s;
    s.video_id = make_video_id(cfg, index);
    s.num_frames = cfg.frames;
    for (int f = 0; f < cfg.frames; ++f) {
      for (int k = 0; k < K; ++k) {
        s.entities.push_back(text_entity(words[k], f, xs[k], ys[row[k]], f * 1000 + k, f * 1000 + k));
      }
    }
    std::vector<const VisualEntity*> frame0;
    for (int k = 0; k < K; ++k) frame0.push_back(&s.entities[k]);
    double margin = 0.0;
    const int target = spatial_target(frame0, relation, ref, &margin);
    if (target < 0 || margin < min_margin) continue;
    s.entities = derive_granularity_boxes(std::move(s.entities));
    add_objects(rng, cfg, s);
    s.question = spatial_question(relation, ref);
    s.answers = {words[target]};
    key.answer = words[target];
    key.relation = relation;
    key.target_entity = target;
    return s;
  }
  throw std::runtime_error("spatial task: placement failed for sample " + std::to_string(index));
}

// --- tracking ------------------------------------------------------------

VideoSample tracking_sample(const SynthConfig& cfg, const std::vector<std::string>& pool,
                            const std::vector<std::string>& anchors_pool, int index, AnswerKeyEntry& key) {
  auto rng = derived_rng(cfg.seed, static_cast<std::uint64_t>(index));
  const int K = cfg.tracked_instances;
  const int T = cfg.frames;
  int corrupted = static_cast<int>(std::lround(cfg.corruption_rate * T));
  if (corrupted > 0) corrupted = std::min(corrupted, T - 1);
  for (int attempt = 0; attempt < 10 * kMaxAttempts; ++attempt) {
    const auto texts = draw_distinct(rng, pool, K);
    const auto anchors = draw_distinct(rng, anchors_pool, K);
    const auto ys = spaced_rows(rng, K, 0.05, 0.8, 0.15);
    if (ys.empty()) continue;
    struct Track {
      double ax, tx, y, vx, vy;
    };
    std::vector<Track> tracks(K);
    for (int k = 0; k < K; ++k) {
      auto& tr = tracks[k];
      tr.ax = uniform(rng, 0.02, 0.4);
      tr.tx = tr.ax + word_width(anchors[k]) + uniform(rng, 0.01, 0.04);
      tr.y = ys[k];
      tr.vx = uniform(rng, -0.01, 0.01);
      tr.vy = uniform(rng, -0.01, 0.01);
    }
    std::vector<int> frames(T);
    std::iota(frames.begin(), frames.end(), 0);
    std::shuffle(frames.begin(), frames.end(), rng);
    std::vector<bool> is_corrupt(T, false);
    for (int i = 0; i < corrupted; ++i) is_corrupt[frames[i]] = true;

    VideoSample s;
    s.video_id = make_video_id(cfg, index);
    s.num_frames = T;
    bool ok = true;
    for (int f = 0; f < T && ok; ++f) {
      for (int k = 0; k < K; ++k) {
        const auto& tr = tracks[k];
        const double y = tr.y + f * tr.vy;
        const double ax = tr.ax + f * tr.vx, tx = tr.tx + f * tr.vx;
        if (y < 0.0 || y + kLineHeight > 1.0 || ax < 0.0 || tx + word_width(texts[k]) > 1.0) ok = false;
        const bool hide_text = is_corrupt[f];
        const bool hide_anchor = corrupted > 0 && !is_corrupt[f];
        auto a = text_entity(hide_anchor ? "<unk>" : anchors[k], f, ax, y, f * 1000 + k, f * 1000 + k);
        auto t = text_entity(hide_text ? "<unk>" : texts[k], f, tx, y, f * 1000 + k, f * 1000 + k);
        // Keep the box extents independent of the displayed text.
        a.word_box.x_br = ax + word_width(anchors[k]);
        t.word_box.x_br = tx + word_width(texts[k]);
        a.instance_id = K + k;
        t.instance_id = k;
        s.entities.push_back(a);
        s.entities.push_back(t);
      }
    }
    if (!ok) continue;
    for (int f = 0; f < T && ok; ++f) {
      for (int k = 1; k < K; ++k) {
        if ((tracks[k].y + f * tracks[k].vy) - (tracks[k - 1].y + f * tracks[k - 1].vy) < 0.08) ok = false;
      }
    }
    for (std::size_t i = 0; i + 2 * K < s.entities.size() && ok; ++i) {
      if (s.entities[i].word_box.iou(s.entities[i + 2 * K].word_box) < 0.3) ok = false;
    }
    if (!ok) continue;
    s.entities = derive_granularity_boxes(std::move(s.entities));
    add_objects(rng, cfg, s);
    const int target = uniform_int(rng, 0, K - 1);
    s.question = "what is written next to " + anchors[target];
    s.answers = {texts[target]};
    key.answer = texts[target];
    key.relation = "track";
    key.target_entity = first_index(s, texts[target]);
    return s;
  }
  throw std::runtime_error("tracking task: placement failed for sample " + std::to_string(index));
}

// --- redundancy ----------------------------------------------------------

/// Lays out lines of words top to bottom; false when a line does not fit.
bool layout_frame(std::mt19937_64& rng, const std::vector<std::vector<std::string>>& lines, int frame,
                  std::vector<VisualEntity>& out) {
  const auto ys = spaced_rows(rng, static_cast<int>(lines.size()), 0.03, 0.9, 0.08);
  if (ys.empty()) return false;
  std::vector<VisualEntity> placed;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    double x = uniform(rng, 0.02, 0.3);
    for (const auto& w : lines[l]) {
      const int id = frame * 1000 + static_cast<int>(l);
      placed.push_back(text_entity(w, frame, x, ys[l], id, frame * 1000));
      x += word_width(w) + uniform(rng, 0.02, 0.05);
    }
    if (x > 1.0) return false;
  }
  out.insert(out.end(), placed.begin(), placed.end());
  return true;
}

VideoSample redundancy_sample(const SynthConfig& cfg, const std::vector<std::string>& pool, int index,
                              AnswerKeyEntry& key) {
  auto rng = derived_rng(cfg.seed, static_cast<std::uint64_t>(index));
  const int T = cfg.frames;
  const int M = cfg.text_slots;
  for (int attempt = 0; attempt < 10 * kMaxAttempts; ++attempt) {
    const auto pair = draw_distinct(rng, pool, 2);
    const std::string& keyword = pair[0];
    const std::string& answer = pair[1];
    std::vector<int> order(T);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> relevant(T, false);
    for (int i = 0; i < cfg.relevant_frames; ++i) relevant[order[i]] = true;

    VideoSample s;
    s.video_id = make_video_id(cfg, index);
    s.num_frames = T;
    bool ok = true;
    for (int f = 0; f < T && ok; ++f) {
      std::vector<std::vector<std::string>> lines;
      int remaining = M;
      if (relevant[f]) {
        lines.push_back({keyword, answer});
        remaining -= 2;
      }
      const auto fill = draw_distinct(rng, pool, remaining, {keyword, answer});
      for (int i = 0; i < remaining; i += 2) {
        std::vector<std::string> line{fill[i]};
        if (i + 1 < remaining) line.push_back(fill[i + 1]);
        lines.push_back(line);
      }
      std::shuffle(lines.begin(), lines.end(), rng);
      ok = layout_frame(rng, lines, f, s.entities);
    }
    if (!ok) continue;
    s.entities = derive_granularity_boxes(std::move(s.entities));
    add_objects(rng, cfg, s);
    s.question = "what word is next to " + keyword;
    s.answers = {answer};
    key.answer = answer;
    key.relation = "keyword";
    key.target_entity = first_index(s, answer);
    return s;
  }
  throw std::runtime_error("redundancy task: placement failed for sample " + std::to_string(index));
}

SynthDataset generate_with(const SynthConfig& cfg,
                           const std::function<VideoSample(int, AnswerKeyEntry&)>& make) {
  cfg.validate();
  SynthDataset d;
  for (int i = 0; i < cfg.num_samples; ++i) {
    AnswerKeyEntry key;
    key.index = i;
    d.samples.push_back(make(i, key));
    key.video_id = d.samples.back().video_id;
    d.answer_key.push_back(std::move(key));
  }
  return d;
}

}  // namespace

SynthTask synth_task_from_string(const std::string& name) {
  if (name == "spatial") return SynthTask::Spatial;
  if (name == "tracking") return SynthTask::Tracking;
  if (name == "redundancy") return SynthTask::Redundancy;
  throw std::invalid_argument("unknown synthetic task '" + name + "'");
}

std::string to_string(SynthTask task) {
  switch (task) {
    case SynthTask::Spatial:
      return "spatial";
    case SynthTask::Tracking:
      return "tracking";
    case SynthTask::Redundancy:
      return "redundancy";
  }
  return "?";
}

void SynthConfig::validate() const {
  if (num_samples < 0) throw std::invalid_argument("synth: num_samples must be >= 0");
  if (frames < 1) throw std::invalid_argument("synth: T must be >= 1");
  if (text_slots < 1 || object_slots < 0) throw std::invalid_argument("synth: need M >= 1, N >= 0");
  if (min_word_len < 2 || max_word_len > 6 || min_word_len > max_word_len) {
    throw std::invalid_argument("synth: word lengths must lie in [2, 6]");
  }
  if (corruption_rate < 0.0 || corruption_rate > 1.0) throw std::invalid_argument("synth: corruption rate in [0,1]");
  switch (task) {
    case SynthTask::Spatial:
      if (candidates < 1 || candidates > text_slots) throw std::invalid_argument("synth: need 1 <= K <= M");
      if (word_pool < candidates) throw std::invalid_argument("synth: word pool smaller than K");
      break;
    case SynthTask::Tracking:
      if (tracked_instances < 1 || 2 * tracked_instances > text_slots) {
        throw std::invalid_argument("synth: tracking needs 2 * instances <= M");
      }
      if (frames < 2 && corruption_rate > 0.0) {
        throw std::invalid_argument("synth: corrupted tracking needs T >= 2");
      }
      if (word_pool < tracked_instances) throw std::invalid_argument("synth: word pool too small");
      break;
    case SynthTask::Redundancy:
      if (relevant_frames < 1 || relevant_frames > frames) {
        throw std::invalid_argument("synth: relevant frames must lie in [1, T]");
      }
      if (text_slots < 2) throw std::invalid_argument("synth: redundancy needs M >= 2");
      if (word_pool < text_slots + 2) throw std::invalid_argument("synth: word pool too small");
      break;
  }
}

std::vector<std::string> synth_word_pool(const SynthConfig& cfg) {
  auto rng = derived_rng(cfg.seed, 0x9001);
  std::set<std::string> avoid(object_labels().begin(), object_labels().end());
  return make_pool(rng, cfg.word_pool, cfg.min_word_len, cfg.max_word_len, avoid);
}

SynthDataset generate_spatial_task(const SynthConfig& cfg) {
  SynthConfig c = cfg;
  c.task = SynthTask::Spatial;
  const auto pool = synth_word_pool(c);
  return generate_with(c, [&](int i, AnswerKeyEntry& key) { return spatial_sample(c, pool, i, key); });
}

SynthDataset generate_tracking_task(const SynthConfig& cfg) {
  SynthConfig c = cfg;
  c.task = SynthTask::Tracking;
  const auto pool = synth_word_pool(c);
  const auto anchors = anchor_pool(c);
  return generate_with(c, [&](int i, AnswerKeyEntry& key) { return tracking_sample(c, pool, anchors, i, key); });
}

SynthDataset generate_redundancy_task(const SynthConfig& cfg) {
  SynthConfig c = cfg;
  c.task = SynthTask::Redundancy;
  const auto pool = synth_word_pool(c);
  return generate_with(c, [&](int i, AnswerKeyEntry& key) { return redundancy_sample(c, pool, i, key); });
}

SynthDataset generate_task(const SynthConfig& cfg) {
  switch (cfg.task) {
    case SynthTask::Spatial:
      return generate_spatial_task(cfg);
    case SynthTask::Tracking:
      return generate_tracking_task(cfg);
    case SynthTask::Redundancy:
      return generate_redundancy_task(cfg);
  }
  throw std::invalid_argument("unknown synthetic task");
}

std::string dump_answer_key(const std::vector<AnswerKeyEntry>& key) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& k : key) {
    nlohmann::ordered_json o;
    o["index"] = k.index;
    o["video_id"] = k.video_id;
    o["answer"] = k.answer;
    o["relation"] = k.relation;
    o["target_entity"] = k.target_entity;
    arr.push_back(std::move(o));
  }
  return arr.dump(1) + "\n";
}

std::vector<AnswerKeyEntry> parse_answer_key(const std::string& json_text) {
  std::vector<AnswerKeyEntry> out;
  for (const auto& o : nlohmann::json::parse(json_text)) {
    AnswerKeyEntry k;
    k.index = o.at("index").get<int>();
    k.video_id = o.at("video_id").get<std::string>();
    k.answer = o.at("answer").get<std::string>();
    k.relation = o.at("relation").get<std::string>();
    k.target_entity = o.at("target_entity").get<int>();
    out.push_back(std::move(k));
  }
  return out;
}

std::string oracle_answer(const VideoSample& s, SynthTask task) {
  switch (task) {
    case SynthTask::Spatial: {
      std::string ref;
      const std::string relation = spatial_relation_of(s.question, &ref);
      std::vector<const VisualEntity*> cands;
      for (int i : texts_in_frame(s, 0)) cands.push_back(&s.entities[i]);
      const int t = spatial_target(cands, relation, ref, nullptr);
      return t < 0 ? std::string() : cands[t]->text;
    }
    case SynthTask::Tracking: {
      const std::string anchor = last_word(s.question);
      const int a = first_index(s, anchor);
      if (a < 0) return {};
      const auto& ae = s.entities[a];
      // The instance is the nearest text to the right of the anchor on its line.
      int cur = -1;
      for (int i : texts_in_frame(s, ae.frame_index)) {
        const auto& e = s.entities[i];
        if (i == a || std::abs(e.word_box.y_tl - ae.word_box.y_tl) > 0.01 || e.word_box.x_tl <= ae.word_box.x_tl) {
          continue;
        }
        if (cur < 0 || e.word_box.x_tl < s.entities[cur].word_box.x_tl) cur = i;
      }
      if (cur < 0) return {};
      // Follow the box by overlap until a readable frame turns up, both directions.
      for (int dir : {+1, -1}) {
        int at = cur;
        while (true) {
          if (s.entities[at].text != "<unk>") return s.entities[at].text;
          const int next_frame = s.entities[at].frame_index + dir;
          if (next_frame < 0 || next_frame >= s.num_frames) break;
          int best = -1;
          double best_iou = 0.3;
          for (int i : texts_in_frame(s, next_frame)) {
            const double iou = s.entities[i].word_box.iou(s.entities[at].word_box);
            if (iou >= best_iou) {
              best_iou = iou;
              best = i;
            }
          }
          if (best < 0) break;
          at = best;
        }
      }
      return {};
    }
    case SynthTask::Redundancy: {
      const std::string keyword = last_word(s.question);
      const int k = first_index(s, keyword);
      if (k < 0) return {};
      const auto& ke = s.entities[k];
      int best = -1;
      for (int i : texts_in_frame(s, ke.frame_index)) {
        const auto& e = s.entities[i];
        if (std::abs(e.word_box.y_tl - ke.word_box.y_tl) > 0.01 || e.word_box.x_tl <= ke.word_box.x_tl) continue;
        if (best < 0 || e.word_box.x_tl < s.entities[best].word_box.x_tl) best = i;
      }
      return best < 0 ? std::string() : s.entities[best].text;
    }
  }
  return {};
}

DataSplit split_dataset(const std::vector<VideoSample>& samples, std::uint64_t seed, double train_fraction) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(samples.size())));
  DataSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? split.train : split.val).push_back(samples[order[i]]);
  }
  return split;
}

}  // namespace tea
