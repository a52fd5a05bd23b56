#include "tea/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace tea {

int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string normalize_for_anls(const std::string& s) { return trim(lower(s)); }

std::string normalize_for_accuracy(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : lower(s)) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u) || std::ispunct(u)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

double anls_score(const std::string& prediction, const std::vector<std::string>& answers, double tau) {
  if (answers.empty()) throw std::invalid_argument("anls_score: empty answer list");
  const std::string p = normalize_for_anls(prediction);
  double best = 0.0;
  for (const auto& answer : answers) {
    const std::string a = normalize_for_anls(answer);
    const std::size_t len = std::max(p.size(), a.size());
    const double nl = len == 0 ? 0.0 : static_cast<double>(levenshtein(p, a)) / static_cast<double>(len);
    best = std::max(best, nl < tau ? 1.0 - nl : 0.0);
  }
  return best;
}

int vqa_accuracy(const std::string& prediction, const std::vector<std::string>& answers) {
  const std::string p = normalize_for_accuracy(prediction);
  for (const auto& a : answers) {
    if (normalize_for_accuracy(a) == p) return 1;
  }
  return 0;
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

EvalRecord score_prediction(const VideoSample& sample, const std::string& prediction) {
  EvalRecord r;
  r.video_id = sample.video_id;
  r.question = sample.question;
  r.prediction = prediction;
  r.correct = vqa_accuracy(prediction, sample.answers);
  r.anls = anls_score(prediction, sample.answers);
  double best = -1.0;
  for (const auto& a : sample.answers) {
    const double s = anls_score(prediction, {a});
    if (s > best) {
      best = s;
      r.best_answer = a;
    }
  }
  return r;
}

EvalReport summarize(std::vector<EvalRecord> records) {
  EvalReport rep;
  CompensatedSum anls;
  for (const auto& r : records) {
    anls.add(r.anls);
    rep.num_correct += r.correct;
    if (!r.error.empty()) ++rep.num_failures;
  }
  rep.num_samples = static_cast<int>(records.size());
  if (rep.num_samples > 0) {
    rep.accuracy = static_cast<double>(rep.num_correct) / rep.num_samples;
    rep.anls = anls.value() / rep.num_samples;
  }
  rep.records = std::move(records);
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["anls"] = anls;
  j["num_samples"] = num_samples;
  j["num_correct"] = num_correct;
  j["num_failures"] = num_failures;
  auto& recs = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json o;
    o["video_id"] = r.video_id;
    o["question"] = r.question;
    o["prediction"] = r.prediction;
    o["best_answer"] = r.best_answer;
    o["anls"] = r.anls;
    o["correct"] = r.correct;
    if (!r.error.empty()) o["error"] = r.error;
    recs.push_back(std::move(o));
  }
  return j.dump(2) + "\n";
}

std::vector<CrossAttentionRow> cross_attention_rows(const GenerationTrace& trace, const EntitySequence& seq,
                                                    const std::vector<std::string>& question_tokens) {
  std::vector<CrossAttentionRow> rows;
  for (std::size_t step = 0; step < trace.cross_weights.size(); ++step) {
    const auto& w = trace.cross_weights[step];
    for (std::size_t m = 0; m < w.size(); ++m) {
      CrossAttentionRow r;
      r.decode_step = static_cast<int>(step);
      r.memory_index = static_cast<int>(m);
      r.weight = w[m];
      const int idx = static_cast<int>(m);
      if (idx < trace.num_clues) {
        r.kind = "clue";
      } else if (idx < trace.num_clues + trace.entity_len) {
        const auto& slot = seq.slots.at(idx - trace.num_clues);
        r.kind = "entity";
        r.frame_index = slot.frame_index;
        r.entity_text = slot.text;
      } else {
        r.kind = "question";
        const int q = idx - trace.num_clues - trace.entity_len;
        if (q < static_cast<int>(question_tokens.size())) r.entity_text = question_tokens[q];
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_cross_attention_csv(const std::vector<CrossAttentionRow>& rows, const std::string& path) {
  auto out = open_csv(path);
  out << "decode_step,memory_index,kind,frame_index,entity_text,weight\n";
  for (const auto& r : rows) {
    out << r.decode_step << ',' << r.memory_index << ',' << r.kind << ',' << r.frame_index << ','
        << csv_field(r.entity_text) << ',' << r.weight << '\n';
  }
  if (!out) throw std::runtime_error("error while writing '" + path + "'");
}

void write_clue_attention_csv(const GenerationTrace& trace, const std::string& path) {
  auto out = open_csv(path);
  out << "layer,clue_index,entity_index,weight\n";
  for (std::size_t l = 0; l < trace.clue_weights.size(); ++l) {
    const auto& w = trace.clue_weights[l];
    for (Eigen::Index g = 0; g < w.rows(); ++g) {
      for (Eigen::Index j = 0; j < std::min<Eigen::Index>(w.cols(), trace.entity_len); ++j) {
        out << l << ',' << g << ',' << j << ',' << w(g, j) << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("error while writing '" + path + "'");
}

}  // namespace tea
