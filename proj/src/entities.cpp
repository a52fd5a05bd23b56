#include "tea/entities.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace tea {

using nlohmann::json;

BoundingBox BoundingBox::united(const BoundingBox& other) const {
  return {std::min(x_tl, other.x_tl), std::min(y_tl, other.y_tl), std::max(x_br, other.x_br),
          std::max(y_br, other.y_br)};
}

double BoundingBox::iou(const BoundingBox& other) const {
  const double ix = std::max(0.0, std::min(x_br, other.x_br) - std::max(x_tl, other.x_tl));
  const double iy = std::max(0.0, std::min(y_br, other.y_br) - std::max(y_tl, other.y_tl));
  const double inter = ix * iy;
  const double uni = area() + other.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

constexpr double kContainmentTol = 0.02;

std::string where(const std::string& video_id, std::size_t entity) {
  return "video '" + video_id + "', entity " + std::to_string(entity);
}

BoundingBox box_from_json(const json& j, double sx, double sy) {
  if (!j.is_array() || j.size() != 4) {
    throw ValidationError("box must be an array of 4 numbers");
  }
  return {j[0].get<double>() / sx, j[1].get<double>() / sy, j[2].get<double>() / sx,
          j[3].get<double>() / sy};
}

json box_to_json(const BoundingBox& b) { return json::array({b.x_tl, b.y_tl, b.x_br, b.y_br}); }

std::pair<int, int> line_and_column(const std::string& text, std::size_t byte) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

VideoSample sample_from_json(const json& js, IngestWarnings* warnings) {
  VideoSample s;
  s.video_id = js.at("video_id").get<std::string>();
  s.num_frames = js.at("num_frames").get<int>();
  double sx = 1.0;
  double sy = 1.0;
  if (js.contains("frame_size")) {
    const auto& fs = js["frame_size"];
    if (!fs.is_array() || fs.size() != 2 || fs[0].get<double>() <= 0 || fs[1].get<double>() <= 0) {
      throw ValidationError("video '" + s.video_id + "': frame_size must be [w,h] > 0");
    }
    sx = fs[0].get<double>();
    sy = fs[1].get<double>();
  }
  bool needs_grouping = false;
  const auto& ents = js.at("entities");
  for (std::size_t k = 0; k < ents.size(); ++k) {
    const auto& je = ents[k];
    VisualEntity e;
    const auto kind = je.at("kind").get<std::string>();
    if (kind == "text") {
      e.kind = EntityKind::SceneText;
    } else if (kind == "object") {
      e.kind = EntityKind::Object;
    } else {
      throw ValidationError(where(s.video_id, k) + ": unknown kind '" + kind + "'");
    }
    e.text = je.at("text").get<std::string>();
    e.frame_index = je.at("frame").get<int>();
    try {
      e.word_box = box_from_json(je.at("box"), sx, sy);
      if (je.contains("line_box")) e.line_box = box_from_json(je["line_box"], sx, sy);
      if (je.contains("para_box")) e.para_box = box_from_json(je["para_box"], sx, sy);
    } catch (const ValidationError& err) {
      throw ValidationError(where(s.video_id, k) + ": " + err.what());
    }
    if (je.contains("line_id")) e.line_id = je["line_id"].get<int>();
    if (je.contains("para_id")) e.para_id = je["para_id"].get<int>();
    if (je.contains("instance_id")) e.instance_id = je["instance_id"].get<int>();
    if (e.is_scene_text() && (!e.line_box || !e.para_box) && e.line_id && e.para_id) {
      needs_grouping = true;
    }
    s.entities.push_back(std::move(e));
  }
  if (needs_grouping) {
    s.entities = derive_granularity_boxes(std::move(s.entities));
  }
  // Ungrouped scene text is its own line and paragraph.
  for (auto& e : s.entities) {
    if (!e.is_scene_text()) continue;
    if (!e.line_box) e.line_box = e.word_box;
    if (!e.para_box) e.para_box = *e.line_box;
  }
  s.question = js.at("question").get<std::string>();
  s.answers = js.at("answers").get<std::vector<std::string>>();
  if (js.contains("frame_features")) {
    const auto& ff = js["frame_features"];
    const auto rows = static_cast<Eigen::Index>(ff.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(ff[0].size()) : 0;
    Eigen::MatrixXd feats(rows, cols);
    for (Eigen::Index t = 0; t < rows; ++t) {
      if (static_cast<Eigen::Index>(ff[t].size()) != cols) {
        throw ValidationError("video '" + s.video_id + "': ragged frame_features");
      }
      for (Eigen::Index c = 0; c < cols; ++c) feats(t, c) = ff[t][c].get<double>();
    }
    s.frame_features = std::move(feats);
  }
  validate_sample(s, warnings);
  return s;
}

}  // namespace

void validate_sample(const VideoSample& s, IngestWarnings* warnings) {
  if (s.num_frames < 1) {
    throw ValidationError("video '" + s.video_id + "': num_frames must be >= 1");
  }
  if (s.answers.empty()) {
    throw ValidationError("video '" + s.video_id + "': answers must be non-empty");
  }
  if (s.frame_features && s.frame_features->rows() != s.num_frames) {
    throw ValidationError("video '" + s.video_id + "': frame_features must have num_frames rows");
  }
  for (std::size_t k = 0; k < s.entities.size(); ++k) {
    const auto& e = s.entities[k];
    if (e.frame_index < 0 || e.frame_index >= s.num_frames) {
      throw ValidationError(where(s.video_id, k) + ": frame " + std::to_string(e.frame_index) +
                            " outside [0, " + std::to_string(s.num_frames) + ")");
    }
    auto check = [&](const BoundingBox& b, const char* name) {
      if (!b.valid()) {
        std::ostringstream os;
        os << where(s.video_id, k) << ": " << name << " (" << b.x_tl << "," << b.y_tl << ","
           << b.x_br << "," << b.y_br << ") is not a normalized box";
        throw ValidationError(os.str());
      }
    };
    check(e.word_box, "box");
    if (e.line_box) check(*e.line_box, "line_box");
    if (e.para_box) check(*e.para_box, "para_box");
    if (e.is_scene_text()) {
      if (!e.line_box || !e.para_box) {
        throw ValidationError(where(s.video_id, k) + ": scene text without line/para box");
      }
      if (warnings != nullptr) {
        if (!e.word_box.within(*e.line_box, kContainmentTol)) {
          warnings->messages.push_back(where(s.video_id, k) + ": word box not inside line box");
        }
        if (!e.line_box->within(*e.para_box, kContainmentTol)) {
          warnings->messages.push_back(where(s.video_id, k) + ": line box not inside para box");
        }
      }
    } else if (e.line_box || e.para_box) {
      throw ValidationError(where(s.video_id, k) + ": object entities carry only a word box");
    }
  }
}

std::vector<VideoSample> parse_annotations(const std::string& text, IngestWarnings* warnings) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    const auto [line, col] = line_and_column(text, err.byte > 0 ? err.byte - 1 : 0);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                     err.what());
  }
  if (!doc.is_array()) {
    throw ValidationError("annotation file must hold an array of samples");
  }
  std::vector<VideoSample> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      out.push_back(sample_from_json(doc[i], warnings));
    } catch (const json::exception& err) {
      throw ValidationError("sample " + std::to_string(i) + ": " + err.what());
    }
  }
  return out;
}

std::vector<VideoSample> load_annotations(const std::string& path, IngestWarnings* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open annotation file '" + path + "'");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_annotations(buf.str(), warnings);
}

std::string dump_annotations(const std::vector<VideoSample>& samples) {
  json doc = json::array();
  for (const auto& s : samples) {
    json js;
    js["video_id"] = s.video_id;
    js["num_frames"] = s.num_frames;
    json ents = json::array();
    for (const auto& e : s.entities) {
      json je;
      je["kind"] = e.is_scene_text() ? "text" : "object";
      je["text"] = e.text;
      je["frame"] = e.frame_index;
      je["box"] = box_to_json(e.word_box);
      if (e.line_box) je["line_box"] = box_to_json(*e.line_box);
      if (e.para_box) je["para_box"] = box_to_json(*e.para_box);
      if (e.line_id) je["line_id"] = *e.line_id;
      if (e.para_id) je["para_id"] = *e.para_id;
      if (e.instance_id) je["instance_id"] = *e.instance_id;
      ents.push_back(std::move(je));
    }
    js["entities"] = std::move(ents);
    js["question"] = s.question;
    js["answers"] = s.answers;
    if (s.frame_features) {
      json ff = json::array();
      for (Eigen::Index t = 0; t < s.frame_features->rows(); ++t) {
        json row = json::array();
        for (Eigen::Index c = 0; c < s.frame_features->cols(); ++c) {
          row.push_back((*s.frame_features)(t, c));
        }
        ff.push_back(std::move(row));
      }
      js["frame_features"] = std::move(ff);
    }
    doc.push_back(std::move(js));
  }
  return doc.dump(1);
}

std::vector<VisualEntity> derive_granularity_boxes(std::vector<VisualEntity> words) {
  struct Group {
    BoundingBox box;
    int frame = 0;
    bool seen = false;
  };
  std::map<int, Group> lines;
  for (const auto& w : words) {
    if (!w.is_scene_text()) continue;
    if (!w.line_id || !w.para_id) {
      throw ValidationError("scene text '" + w.text + "' lacks line_id/para_id");
    }
    auto& g = lines[*w.line_id];
    if (!g.seen) {
      g = {w.word_box, w.frame_index, true};
    } else {
      if (g.frame != w.frame_index) {
        throw ValidationError("line group " + std::to_string(*w.line_id) +
                              " spans frames " + std::to_string(g.frame) + " and " +
                              std::to_string(w.frame_index));
      }
      g.box = g.box.united(w.word_box);
    }
  }
  std::map<int, Group> paras;
  for (const auto& w : words) {
    if (!w.is_scene_text()) continue;
    const auto& line = lines.at(*w.line_id);
    auto& g = paras[*w.para_id];
    if (!g.seen) {
      g = {line.box, line.frame, true};
    } else {
      if (g.frame != line.frame) {
        throw ValidationError("paragraph group " + std::to_string(*w.para_id) +
                              " spans several frames");
      }
      g.box = g.box.united(line.box);
    }
  }
  for (auto& w : words) {
    if (!w.is_scene_text()) continue;
    w.line_box = lines.at(*w.line_id).box;
    w.para_box = paras.at(*w.para_id).box;
  }
  return words;
}

bool reading_order_less(const VisualEntity& a, const VisualEntity& b) {
  if (a.word_box.y_tl != b.word_box.y_tl) return a.word_box.y_tl < b.word_box.y_tl;
  return a.word_box.x_tl < b.word_box.x_tl;
}

EntitySequence build_entity_sequence(const VideoSample& sample, int text_slots, int object_slots) {
  if (text_slots < 1 || object_slots < 0) {
    throw std::invalid_argument("build_entity_sequence: need M >= 1 and N >= 0");
  }
  EntitySequence seq;
  seq.num_frames = sample.num_frames;
  seq.text_slots = text_slots;
  seq.object_slots = object_slots;
  seq.slots.reserve(static_cast<std::size_t>(sample.num_frames) * (text_slots + object_slots));

  std::vector<std::vector<int>> texts(sample.num_frames);
  std::vector<std::vector<int>> objects(sample.num_frames);
  for (int k = 0; k < static_cast<int>(sample.entities.size()); ++k) {
    const auto& e = sample.entities[k];
    (e.is_scene_text() ? texts : objects)[e.frame_index].push_back(k);
  }
  auto order = [&](std::vector<int>& ids) {
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      const auto& ea = sample.entities[a];
      const auto& eb = sample.entities[b];
      if (reading_order_less(ea, eb)) return true;
      if (reading_order_less(eb, ea)) return false;
      return a < b;
    });
  };
  auto fill = [&](std::vector<int>& ids, int capacity, int frame, bool scene_text) {
    order(ids);
    for (int s = 0; s < capacity; ++s) {
      EntitySlot slot;
      slot.frame_index = frame;
      slot.is_scene_text = scene_text;
      slot.text = kPadText;
      if (s < static_cast<int>(ids.size())) {
        const auto& e = sample.entities[ids[s]];
        slot.entity = ids[s];
        slot.text = e.text;
        slot.word_box = e.word_box;
        slot.line_box = e.line_box;
        slot.para_box = e.para_box;
      }
      seq.slots.push_back(slot);
    }
    seq.truncated += std::max(0, static_cast<int>(ids.size()) - capacity);
  };
  for (int t = 0; t < sample.num_frames; ++t) {
    fill(texts[t], text_slots, t, true);
    fill(objects[t], object_slots, t, false);
  }
  return seq;
}

}  // namespace tea
