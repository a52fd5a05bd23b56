#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tea/evaluation.hpp"

using namespace tea;

namespace {

// Exponential recursion straight from the definition.
int edit_oracle(const std::string& a, const std::string& b) {
  if (a.empty()) return static_cast<int>(b.size());
  if (b.empty()) return static_cast<int>(a.size());
  const std::string ra = a.substr(1), rb = b.substr(1);
  if (a[0] == b[0]) return edit_oracle(ra, rb);
  return 1 + std::min({edit_oracle(ra, b), edit_oracle(a, rb), edit_oracle(ra, rb)});
}

std::vector<std::string> all_strings(int max_len, const std::string& alphabet) {
  std::vector<std::string> out{""};
  std::vector<std::string> frontier{""};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::string> next;
    for (const auto& s : frontier) {
      for (char c : alphabet) next.push_back(s + c);
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

VideoSample sample_with(const std::string& id, std::vector<std::string> answers) {
  VideoSample s;
  s.video_id = id;
  s.question = "q";
  s.answers = std::move(answers);
  return s;
}

}  // namespace

TEST(Levenshtein, Examples) {
  EXPECT_EQ(levenshtein("", "abc"), 3);
  EXPECT_EQ(levenshtein("45", "45"), 0);
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3);
}

TEST(Levenshtein, ExhaustiveShortStrings) {
  // every pair of strings of length <= 4 over {a,b,c}; the acceptance run covers length 6
  const auto strings = all_strings(4, "abc");
  for (const auto& a : strings) {
    for (const auto& b : strings) ASSERT_EQ(levenshtein(a, b), edit_oracle(a, b)) << a << " / " << b;
  }
}

TEST(Levenshtein, RandomPairsAndMetricAxioms) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 8), ch(0, 3);
  auto draw = [&] {
    std::string s(len(rng), 'a');
    for (char& c : s) c = static_cast<char>('a' + ch(rng));
    return s;
  };
  for (int n = 0; n < 300; ++n) {
    const auto a = draw(), b = draw(), c = draw();
    const int ab = levenshtein(a, b);
    ASSERT_EQ(ab, edit_oracle(a, b));
    EXPECT_EQ(ab, levenshtein(b, a));
    EXPECT_EQ(ab == 0, a == b);
    EXPECT_LE(levenshtein(a, c), ab + levenshtein(b, c));
  }
}

TEST(Anls, Examples) {
  EXPECT_DOUBLE_EQ(anls_score("Speed ", {"speed"}), 1.0);
  EXPECT_NEAR(anls_score("spead", {"speed"}), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(anls_score("abc", {"xyz"}), 0.0);
  // max over answers
  EXPECT_NEAR(anls_score("spead", {"xyz", "speed"}), 0.8, 1e-15);
  EXPECT_THROW(anls_score("x", {}), std::invalid_argument);
}

TEST(Anls, ThresholdBoundary) {
  // NL = 2/4 = 0.5 is not below tau
  EXPECT_DOUBLE_EQ(anls_score("abxx", {"abcd"}), 0.0);
  // NL = 1/4
  EXPECT_DOUBLE_EQ(anls_score("abcx", {"abcd"}), 0.75);
  EXPECT_DOUBLE_EQ(anls_score("abxx", {"abcd"}, 0.6), 0.5);
}

TEST(Anls, NonIncreasingInEditDistance) {
  const std::string truth = "abcdefgh";
  double prev = 1.0;
  std::string pred = truth;
  for (int k = 0; k < 8; ++k) {
    pred[k] = 'z';
    const double s = anls_score(pred, {truth});
    EXPECT_LE(s, prev);
    prev = s;
  }
}

TEST(Accuracy, Normalization) {
  EXPECT_EQ(vqa_accuracy("West Cargo Area", {"west cargo area"}), 1);
  EXPECT_EQ(vqa_accuracy("45", {"45 mph"}), 0);
  EXPECT_EQ(vqa_accuracy("speed-limit", {"speed limit"}), 1);
  EXPECT_EQ(normalize_for_accuracy("speed-limit"), normalize_for_accuracy("speed limit"));
  EXPECT_EQ(normalize_for_accuracy("  A,  b!! "), "a b");
}

TEST(CompensatedSum, BeatsNaiveSummation) {
  CompensatedSum s;
  double naive = 0.0;
  const double big = 1e16;
  s.add(big);
  naive += big;
  for (int i = 0; i < 1000; ++i) {
    s.add(1.0);
    naive += 1.0;
  }
  s.add(-big);
  naive -= big;
  EXPECT_EQ(s.value(), 1000.0);
  EXPECT_NE(naive, 1000.0);
}

TEST(Summarize, MeanOfPerSampleScores) {
  std::vector<EvalRecord> records;
  records.push_back(score_prediction(sample_with("a", {"stop"}), "stop"));
  records.push_back(score_prediction(sample_with("b", {"speed"}), "spead"));
  const auto report = summarize(records);
  EXPECT_EQ(report.num_samples, 2);
  EXPECT_NEAR(report.anls, 0.9, 1e-15);
  EXPECT_DOUBLE_EQ(report.accuracy, 0.5);
  EXPECT_EQ(report.records[1].best_answer, "speed");
}

TEST(Summarize, EmptyPredictionsScoreZero) {
  std::vector<EvalRecord> records;
  for (int i = 0; i < 5; ++i) records.push_back(score_prediction(sample_with("s", {"word"}), ""));
  const auto report = summarize(records);
  EXPECT_EQ(report.accuracy, 0.0);
  EXPECT_EQ(report.anls, 0.0);
}

TEST(Summarize, OrderIndependent) {
  std::mt19937_64 rng(4);
  std::vector<EvalRecord> records;
  const std::vector<std::string> preds{"a", "ab", "abc", "abd", "xbd", "abcd", ""};
  for (int i = 0; i < 997; ++i) records.push_back(score_prediction(sample_with("s", {"abcd"}), preds[i % preds.size()]));
  const auto a = summarize(records);
  std::shuffle(records.begin(), records.end(), rng);
  const auto b = summarize(records);
  EXPECT_NEAR(a.anls, b.anls, 1e-12);
  EXPECT_NEAR(a.accuracy, b.accuracy, 1e-12);
}

TEST(Summarize, JsonReport) {
  const auto report = summarize({score_prediction(sample_with("v1", {"x"}), "x")});
  const auto j = nlohmann::json::parse(report.to_json());
  EXPECT_EQ(j.at("accuracy").get<double>(), 1.0);
  EXPECT_EQ(j.at("records").at(0).at("video_id"), "v1");
}

TEST(CrossAttention, RowsCoverMemoryAndSumToOne) {
  GenerationTrace trace;
  trace.num_clues = 2;
  trace.entity_len = 3;
  trace.question_len = 1;
  trace.cross_weights = {{0.1, 0.2, 0.3, 0.0, 0.2, 0.2}, {0.0, 0.0, 0.5, 0.0, 0.5, 0.0}};
  EntitySequence seq;
  seq.num_frames = 1;
  seq.text_slots = 2;
  seq.object_slots = 1;
  seq.slots = {{0, 0, true, "stop", {}, {}, {}}, {1, 0, true, "go", {}, {}, {}}, {-1, 0, false, kPadText, {}, {}, {}}};
  const auto rows = cross_attention_rows(trace, seq, {"what"});
  ASSERT_EQ(rows.size(), 12u);
  EXPECT_EQ(rows[0].kind, "clue");
  EXPECT_EQ(rows[2].kind, "entity");
  EXPECT_EQ(rows[2].entity_text, "stop");
  EXPECT_EQ(rows[5].kind, "question");
  EXPECT_EQ(rows[5].entity_text, "what");
  for (int step = 0; step < 2; ++step) {
    double sum = 0.0;
    for (const auto& r : rows) {
      if (r.decode_step == step) sum += r.weight;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}
