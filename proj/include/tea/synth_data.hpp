#pragma once

// Seeded generators for three toy Video TextVQA tasks whose answers need a
// specific capability: box geometry (spatial), cross-frame association of a
// moving instance (tracking) and ignoring unrelated frames (redundancy).

#include <cstdint>
#include <string>
#include <vector>

#include "tea/entities.hpp"

namespace tea {

enum class SynthTask { Spatial, Tracking, Redundancy };

SynthTask synth_task_from_string(const std::string& name);
std::string to_string(SynthTask task);

struct SynthConfig {
  SynthTask task = SynthTask::Spatial;
  int num_samples = 100;
  int frames = 4;              ///< T
  int text_slots = 6;          ///< M
  int object_slots = 2;        ///< N
  int candidates = 4;          ///< K for the spatial task
  int tracked_instances = 3;   ///< labelled instances in the tracking task
  int relevant_frames = 1;     ///< frames holding the keyword (redundancy)
  int word_pool = 64;          ///< distinct answer words
  int min_word_len = 2;
  int max_word_len = 6;
  double corruption_rate = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Oracle answer of one generated sample.
struct AnswerKeyEntry {
  int index = 0;
  std::string video_id;
  std::string answer;
  std::string relation;  ///< spatial relation, "track" or "keyword"
  int target_entity = -1;  ///< index into the sample's entities (first readable occurrence)
};

struct SynthDataset {
  std::vector<VideoSample> samples;
  std::vector<AnswerKeyEntry> answer_key;
};

/// The seeded vocabulary of candidate words.
std::vector<std::string> synth_word_pool(const SynthConfig& cfg);

SynthDataset generate_spatial_task(const SynthConfig& cfg);
SynthDataset generate_tracking_task(const SynthConfig& cfg);
SynthDataset generate_redundancy_task(const SynthConfig& cfg);
SynthDataset generate_task(const SynthConfig& cfg);

std::string dump_answer_key(const std::vector<AnswerKeyEntry>& key);
std::vector<AnswerKeyEntry> parse_answer_key(const std::string& json_text);

/// Re-derives a sample's answer from its emitted content alone. Spatial
/// samples use box geometry, tracking samples the nearest anchor on the
/// instance's line, redundancy samples the right neighbour of the keyword.
std::string oracle_answer(const VideoSample& sample, SynthTask task);

/// 80/20 split by index after a seeded shuffle.
struct DataSplit {
  std::vector<VideoSample> train;
  std::vector<VideoSample> val;
};
DataSplit split_dataset(const std::vector<VideoSample>& samples, std::uint64_t seed, double train_fraction = 0.8);

}  // namespace tea
