#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tea {

/// Raised when an annotation file or a sample violates the data contract.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kPadText = "<pad>";

/// Raised when the annotation file is not well-formed JSON.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normalized axis-aligned rectangle, coordinates are fractions of frame size.
struct BoundingBox {
  double x_tl = 0.0;
  double y_tl = 0.0;
  double x_br = 0.0;
  double y_br = 0.0;

  bool valid() const {
    return 0.0 <= x_tl && x_tl <= x_br && x_br <= 1.0 && 0.0 <= y_tl && y_tl <= y_br &&
           y_br <= 1.0;
  }

  /// True when `this` lies inside `outer` up to `tol` per coordinate.
  bool within(const BoundingBox& outer, double tol) const {
    return x_tl >= outer.x_tl - tol && y_tl >= outer.y_tl - tol && x_br <= outer.x_br + tol &&
           y_br <= outer.y_br + tol;
  }

  BoundingBox united(const BoundingBox& other) const;
  BoundingBox translated(double dx, double dy) const {
    return {x_tl + dx, y_tl + dy, x_br + dx, y_br + dy};
  }
  double area() const { return (x_br - x_tl) * (y_br - y_tl); }
  double iou(const BoundingBox& other) const;

  bool operator==(const BoundingBox&) const = default;
};

enum class EntityKind { SceneText, Object };

struct VisualEntity {
  EntityKind kind = EntityKind::SceneText;
  std::string text;
  int frame_index = 0;
  BoundingBox word_box;
  std::optional<BoundingBox> line_box;
  std::optional<BoundingBox> para_box;
  std::optional<int> instance_id;
  // Grouping ids consumed by derive_granularity_boxes only.
  std::optional<int> line_id;
  std::optional<int> para_id;

  bool is_scene_text() const { return kind == EntityKind::SceneText; }
};

struct VideoSample {
  std::string video_id;
  int num_frames = 1;
  std::vector<VisualEntity> entities;
  std::string question;
  std::vector<std::string> answers;
  /// T x d_g externally supplied per-frame global features, when present.
  std::optional<Eigen::MatrixXd> frame_features;
};

/// One slot of the flattened frame-major entity sequence.
struct EntitySlot {
  int entity = -1;  ///< index into VideoSample::entities, -1 for padding
  int frame_index = 0;
  bool is_scene_text = false;
  std::string text;  ///< kPadText for padding
  BoundingBox word_box;  ///< (0,0,0,0) for padding
  std::optional<BoundingBox> line_box;
  std::optional<BoundingBox> para_box;

  bool is_padding() const { return entity < 0; }
};

/// Frame-major sequence: M scene-text slots then N object slots per frame.
struct EntitySequence {
  int num_frames = 0;
  int text_slots = 0;    ///< M
  int object_slots = 0;  ///< N
  std::vector<EntitySlot> slots;
  /// Entities dropped because a frame held more than M texts / N objects.
  int truncated = 0;

  int slots_per_frame() const { return text_slots + object_slots; }
  int size() const { return static_cast<int>(slots.size()); }
};

/// Human-readable diagnostics produced during ingestion (never fatal).
struct IngestWarnings {
  std::vector<std::string> messages;
};

/// Reads the JSON annotation schema (an array of samples).
std::vector<VideoSample> load_annotations(const std::string& path,
                                          IngestWarnings* warnings = nullptr);
std::vector<VideoSample> parse_annotations(const std::string& json_text,
                                           IngestWarnings* warnings = nullptr);

/// Serializes samples back into the annotation schema.
std::string dump_annotations(const std::vector<VideoSample>& samples);

/// Checks every VideoSample invariant, throws ValidationError on failure.
void validate_sample(const VideoSample& sample, IngestWarnings* warnings = nullptr);

/// Fills line_box / para_box of scene-text entities from their line_id / para_id groups.
std::vector<VisualEntity> derive_granularity_boxes(std::vector<VisualEntity> words);

/// Reading order within a frame: y_tl, then x_tl, ascending.
bool reading_order_less(const VisualEntity& a, const VisualEntity& b);

EntitySequence build_entity_sequence(const VideoSample& sample, int text_slots, int object_slots);

}  // namespace tea
