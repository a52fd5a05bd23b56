#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tea/synth_data.hpp"

using namespace tea;

namespace {

SynthConfig config(SynthTask task, int n, std::uint64_t seed = 0) {
  SynthConfig c;
  c.task = task;
  c.num_samples = n;
  c.seed = seed;
  return c;
}

std::vector<const VisualEntity*> frame_texts(const VideoSample& s, int frame) {
  std::vector<const VisualEntity*> out;
  for (const auto& e : s.entities) {
    if (e.is_scene_text() && e.frame_index == frame) out.push_back(&e);
  }
  return out;
}

}  // namespace

class AllTasks : public ::testing::TestWithParam<SynthTask> {};

TEST_P(AllTasks, OracleMatchesAnswerKeyEverywhere) {
  const auto data = generate_task(config(GetParam(), 300, 5));
  ASSERT_EQ(data.samples.size(), 300u);
  ASSERT_EQ(data.answer_key.size(), 300u);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    EXPECT_EQ(oracle_answer(s, GetParam()), data.answer_key[i].answer) << s.video_id << ": " << s.question;
    EXPECT_EQ(s.answers.front(), data.answer_key[i].answer);
    EXPECT_EQ(data.answer_key[i].video_id, s.video_id);
  }
}

TEST_P(AllTasks, OutputPassesIngestionValidation) {
  const auto data = generate_task(config(GetParam(), 100, 6));
  IngestWarnings warnings;
  const auto back = parse_annotations(dump_annotations(data.samples), &warnings);
  EXPECT_EQ(back.size(), data.samples.size());
  EXPECT_TRUE(warnings.messages.empty());
}

TEST_P(AllTasks, SeedDeterminism) {
  const auto a = dump_annotations(generate_task(config(GetParam(), 40, 9)).samples);
  const auto b = dump_annotations(generate_task(config(GetParam(), 40, 9)).samples);
  const auto c = dump_annotations(generate_task(config(GetParam(), 40, 10)).samples);
  EXPECT_EQ(a, b);
  EXPECT_NE(std::hash<std::string>{}(a), std::hash<std::string>{}(c));
}

TEST_P(AllTasks, FitsDefaultSlots) {
  const auto cfg = config(GetParam(), 100, 7);
  for (const auto& s : generate_task(cfg).samples) {
    const auto seq = build_entity_sequence(s, cfg.text_slots, cfg.object_slots);
    EXPECT_EQ(seq.truncated, 0) << s.video_id;
  }
}

INSTANTIATE_TEST_SUITE_P(Synth, AllTasks,
                         ::testing::Values(SynthTask::Spatial, SynthTask::Tracking, SynthTask::Redundancy),
                         [](const auto& info) { return to_string(info.param); });

TEST(SpatialTask, LeftmostExampleByArgmin) {
  // geometric oracle recomputed here: argmin / argmax over frame-0 boxes
  const auto data = generate_spatial_task(config(SynthTask::Spatial, 200, 1));
  int checked = 0;
  for (const auto& s : data.samples) {
    const auto texts = frame_texts(s, 0);
    auto by = [&](auto key, bool max) {
      return *std::min_element(texts.begin(), texts.end(), [&](auto a, auto b) { return max ? key(a) > key(b) : key(a) < key(b); });
    };
    const std::string q = s.question;
    const VisualEntity* want = nullptr;
    if (q.find("leftmost") != std::string::npos) want = by([](auto e) { return e->word_box.x_tl; }, false);
    if (q.find("rightmost") != std::string::npos) want = by([](auto e) { return e->word_box.x_tl; }, true);
    if (q.find("topmost") != std::string::npos) want = by([](auto e) { return e->word_box.y_tl; }, false);
    if (q.find("bottommost") != std::string::npos) want = by([](auto e) { return e->word_box.y_tl; }, true);
    if (want == nullptr) continue;
    EXPECT_EQ(want->text, s.answers.front()) << q;
    ++checked;
  }
  EXPECT_GT(checked, 80);
}

TEST(SpatialTask, EveryRelationAppears) {
  const auto data = generate_spatial_task(config(SynthTask::Spatial, 300, 2));
  std::set<std::string> relations;
  for (const auto& k : data.answer_key) relations.insert(k.relation);
  EXPECT_EQ(relations, (std::set<std::string>{"leftmost", "rightmost", "topmost", "bottommost", "above", "below"}));
}

TEST(SpatialTask, RelabelingMovesTheAnswer) {
  // Permuting texts among the candidate boxes changes the answer to the text
  // that now sits in the target box: no textual shortcut.
  const auto data = generate_spatial_task(config(SynthTask::Spatial, 100, 3));
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& key = data.answer_key[i];
    if (key.relation == "above" || key.relation == "below") continue;  // question names a text
    VideoSample s = data.samples[i];
    const auto texts = frame_texts(s, 0);
    const int K = static_cast<int>(texts.size());
    std::vector<std::string> words;
    for (auto* e : texts) words.push_back(e->text);
    std::rotate(words.begin(), words.begin() + 1, words.end());
    std::map<std::string, std::string> relabel;
    for (int k = 0; k < K; ++k) relabel[texts[k]->text] = words[k];
    for (auto& e : s.entities) {
      if (e.is_scene_text()) e.text = relabel.at(e.text);
    }
    EXPECT_EQ(oracle_answer(s, SynthTask::Spatial), relabel.at(key.answer));
    EXPECT_NE(oracle_answer(s, SynthTask::Spatial), key.answer);
  }
}

TEST(SpatialTask, SingleCandidateSmoke) {
  auto cfg = config(SynthTask::Spatial, 20, 4);
  cfg.candidates = 1;
  const auto data = generate_spatial_task(cfg);
  for (const auto& s : data.samples) {
    const auto texts = frame_texts(s, 0);
    ASSERT_EQ(texts.size(), 1u);
    EXPECT_EQ(texts[0]->text, s.answers.front());
  }
}

TEST(TrackingTask, CorruptionAndContinuity) {
  auto cfg = config(SynthTask::Tracking, 100, 5);
  cfg.corruption_rate = 0.5;
  const auto data = generate_tracking_task(cfg);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    const auto& answer = s.answers.front();
    int readable = 0;
    int unreadable_frames = 0;
    for (int f = 0; f < s.num_frames; ++f) {
      const auto texts = frame_texts(s, f);
      bool has_answer = false;
      for (auto* e : texts) has_answer = has_answer || e->text == answer;
      readable += has_answer;
      unreadable_frames += !has_answer;
    }
    EXPECT_GE(readable, 1);
    EXPECT_EQ(unreadable_frames, 2) << "round(0.5 * T) frames hide the instance text";
    // the tracked instance's box overlaps itself frame to frame
    for (const auto& a : s.entities) {
      if (!a.instance_id || a.frame_index + 1 >= s.num_frames) continue;
      for (const auto& b : s.entities) {
        if (b.instance_id == a.instance_id && b.frame_index == a.frame_index + 1) {
          EXPECT_GE(a.word_box.iou(b.word_box), 0.3);
        }
      }
    }
  }
}

TEST(TrackingTask, NoCorruptionShowsEverything) {
  auto cfg = config(SynthTask::Tracking, 30, 6);
  cfg.corruption_rate = 0.0;
  for (const auto& s : generate_tracking_task(cfg).samples) {
    for (const auto& e : s.entities) EXPECT_NE(e.text, "<unk>");
  }
}

TEST(RedundancyTask, KeywordOnlyInRelevantFrames) {
  const auto data = generate_redundancy_task(config(SynthTask::Redundancy, 100, 7));
  for (const auto& s : data.samples) {
    const std::string keyword = s.question.substr(s.question.rfind(' ') + 1);
    int frames_with_keyword = 0;
    for (int f = 0; f < s.num_frames; ++f) {
      bool any = false;
      for (auto* e : frame_texts(s, f)) any = any || e->text == keyword;
      frames_with_keyword += any;
    }
    EXPECT_EQ(frames_with_keyword, 1) << s.video_id;
  }
}

TEST(AnswerKey, RoundTrip) {
  const auto data = generate_task(config(SynthTask::Tracking, 10, 8));
  const auto back = parse_answer_key(dump_answer_key(data.answer_key));
  ASSERT_EQ(back.size(), data.answer_key.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].answer, data.answer_key[i].answer);
    EXPECT_EQ(back[i].relation, data.answer_key[i].relation);
    EXPECT_EQ(back[i].target_entity, data.answer_key[i].target_entity);
  }
}

TEST(Split, EightyTwentyAndDisjoint) {
  const auto data = generate_task(config(SynthTask::Spatial, 50, 9));
  const auto split = split_dataset(data.samples, 1);
  EXPECT_EQ(split.train.size(), 40u);
  EXPECT_EQ(split.val.size(), 10u);
  std::set<std::string> ids;
  for (const auto& s : split.train) ids.insert(s.video_id);
  for (const auto& s : split.val) EXPECT_EQ(ids.count(s.video_id), 0u);
}

TEST(SynthConfigTest, Validation) {
  auto cfg = config(SynthTask::Spatial, 10);
  cfg.candidates = 7;  // more than M = 6
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = config(SynthTask::Tracking, 10);
  cfg.corruption_rate = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
