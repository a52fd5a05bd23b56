#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tea/model.hpp"

namespace tea {

/// Character edit distance (insert, delete, substitute all cost 1).
int levenshtein(const std::string& a, const std::string& b);

/// Lowercase and trim surrounding whitespace.
std::string normalize_for_anls(const std::string& s);

/// Lowercase, ASCII punctuation to spaces, trim, collapse whitespace runs.
std::string normalize_for_accuracy(const std::string& s);

/// Max over answers of 1 - NL when NL < tau, else 0. Throws on empty answers.
double anls_score(const std::string& prediction, const std::vector<std::string>& answers, double tau = 0.5);

/// 1 when the normalized prediction equals some normalized answer.
int vqa_accuracy(const std::string& prediction, const std::vector<std::string>& answers);

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct EvalRecord {
  std::string video_id;
  std::string question;
  std::string prediction;
  std::string best_answer;
  double anls = 0.0;
  int correct = 0;
  std::string error;  ///< generation failure message, empty on success
};

struct EvalReport {
  double accuracy = 0.0;
  double anls = 0.0;
  int num_samples = 0;
  int num_correct = 0;
  int num_failures = 0;
  std::vector<EvalRecord> records;

  std::string to_json() const;
};

/// Scores one prediction against a sample's answers.
EvalRecord score_prediction(const VideoSample& sample, const std::string& prediction);

/// Aggregates per-sample records with compensated sums.
EvalReport summarize(std::vector<EvalRecord> records);

/// Greedy generation per sample; a failing sample scores as an empty prediction.
template <typename Scalar>
EvalReport evaluate(const Model<Scalar>& model, const std::vector<VideoSample>& data) {
  std::vector<EvalRecord> records;
  records.reserve(data.size());
  for (const auto& sample : data) {
    std::string prediction;
    std::string error;
    try {
      prediction = model.generate_text(model.prepare(sample));
    } catch (const std::exception& e) {
      error = e.what();
    }
    EvalRecord r = score_prediction(sample, prediction);
    r.error = error;
    records.push_back(std::move(r));
  }
  return summarize(std::move(records));
}

/// One row of the decoder cross-attention dump.
struct CrossAttentionRow {
  int decode_step = 0;
  int memory_index = 0;
  std::string kind;  ///< clue | entity | question
  int frame_index = -1;
  std::string entity_text;
  double weight = 0.0;
};

std::vector<CrossAttentionRow> cross_attention_rows(const GenerationTrace& trace, const EntitySequence& seq,
                                                    const std::vector<std::string>& question_tokens);

void write_cross_attention_csv(const std::vector<CrossAttentionRow>& rows, const std::string& path);

/// Clue cross-attention: (layer, clue_index, entity_index, weight) over entity slots.
void write_clue_attention_csv(const GenerationTrace& trace, const std::string& path);

/// Runs generation with tracing and writes the cross-attention CSV; returns the rows.
template <typename Scalar>
std::vector<CrossAttentionRow> dump_cross_attention(const Model<Scalar>& model, const VideoSample& sample,
                                                    const std::string& path, GenerationTrace* trace_out = nullptr) {
  const auto prepared = model.prepare(sample);
  GenerationTrace trace;
  model.generate(prepared, &trace);
  std::vector<std::string> qtokens;
  for (int id : prepared.question_ids) qtokens.push_back(model.vocab().token(id));
  auto rows = cross_attention_rows(trace, prepared.seq, qtokens);
  write_cross_attention_csv(rows, path);
  if (trace_out != nullptr) *trace_out = std::move(trace);
  return rows;
}

}  // namespace tea
