#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "erc/common.hpp"
#include "erc/corpus.hpp"

namespace erc {

// Evaluation: unweighted accuracy (macro-averaged recall over the four
// classes), fold pooling, and the accuracy-conditioned-on-previous-emotion
// analysis. All functions are pure; the writers emit deterministic bytes.

struct LabeledPrediction {
  EmotionLabel truth = EmotionLabel::ANG;
  EmotionLabel predicted = EmotionLabel::ANG;
  bool operator==(const LabeledPrediction&) const = default;
};

struct PredictionSet {
  // Keyed by segment_id; segment ids are corpus-unique so a map doubles as
  // the disjointness check when folds are combined.
  std::map<std::string, LabeledPrediction> by_segment;
  int fold = -1;  // -1 = combined / not fold-specific
  std::string config_hash;

  std::size_t size() const { return by_segment.size(); }
  bool operator==(const PredictionSet&) const = default;
};

using Confusion = std::array<std::array<int, 4>, 4>;  // [truth][predicted]

inline Confusion confusion_matrix(const PredictionSet& preds) {
  Confusion m{};
  for (const auto& [id, p] : preds.by_segment)
    m[static_cast<int>(p.truth)][static_cast<int>(p.predicted)] += 1;
  return m;
}

// Strict UA: every class must appear in the truth labels.
inline double unweighted_accuracy(const PredictionSet& preds) {
  if (preds.by_segment.empty())
    throw DataError("unweighted accuracy of an empty prediction set");
  const Confusion m = confusion_matrix(preds);
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    int support = 0;
    for (int p = 0; p < kNumClasses; ++p) support += m[c][p];
    if (support == 0)
      throw DataError(std::string("class ") + std::string(kLabelNames[c]) +
                      " absent from the truth labels; unweighted accuracy "
                      "requires all four classes");
    sum += static_cast<double>(m[c][c]) / static_cast<double>(support);
  }
  return sum / kNumClasses;
}

// Lenient variant for small validation splits: averages recall over the
// classes that are actually present.
inline double unweighted_accuracy_present(const PredictionSet& preds) {
  if (preds.by_segment.empty())
    throw DataError("unweighted accuracy of an empty prediction set");
  const Confusion m = confusion_matrix(preds);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    int support = 0;
    for (int p = 0; p < kNumClasses; ++p) support += m[c][p];
    if (support == 0) continue;
    sum += static_cast<double>(m[c][c]) / static_cast<double>(support);
    ++present;
  }
  return sum / present;
}

// Union of disjoint per-fold prediction sets; overlapping segment ids are an
// error. Metrics on the result are pooled (computed once over the union).
inline PredictionSet combine_folds(const std::vector<PredictionSet>& folds) {
  PredictionSet out;
  out.fold = -1;
  for (const PredictionSet& f : folds) {
    for (const auto& [id, p] : f.by_segment) {
      const auto [it, inserted] = out.by_segment.emplace(id, p);
      if (!inserted)
        throw DataError("segment " + id + " appears in more than one fold");
    }
    if (out.config_hash.empty())
      out.config_hash = f.config_hash;
    else if (!f.config_hash.empty() && f.config_hash != out.config_hash)
      out.config_hash.clear();  // mixed provenance
  }
  return out;
}

// Accuracy of target predictions bucketed by the true emotion of the
// immediately preceding segment in the same dialogue (any speaker). Segments
// opening a dialogue have no previous emotion and are counted separately.
struct ConditionalMatrix {
  std::array<std::array<int, 4>, 4> support{};  // [previous][target]
  std::array<std::array<int, 4>, 4> correct{};
  int n_no_previous = 0;

  double recall(int prev, int target) const {
    return support[prev][target] == 0
               ? 0.0
               : static_cast<double>(correct[prev][target]) /
                     static_cast<double>(support[prev][target]);
  }
  bool operator==(const ConditionalMatrix&) const = default;
};

inline ConditionalMatrix conditional_accuracy(const PredictionSet& preds,
                                              const Corpus& corpus) {
  // segment_id -> (label, label of the segment just before it, has_previous)
  struct SegInfo {
    EmotionLabel label;
    EmotionLabel prev_label;
    bool has_previous;
  };
  std::map<std::string, SegInfo> info;
  for (const Dialogue& d : corpus.dialogues) {
    // Segments are validated to be start-ordered within a dialogue already.
    for (std::size_t i = 0; i < d.segments.size(); ++i) {
      SegInfo si;
      si.label = d.segments[i].label;
      si.has_previous = i > 0;
      si.prev_label = i > 0 ? d.segments[i - 1].label : EmotionLabel::ANG;
      info.emplace(d.segments[i].segment_id, si);
    }
  }
  ConditionalMatrix m;
  for (const auto& [id, p] : preds.by_segment) {
    const auto it = info.find(id);
    if (it == info.end())
      throw DataError("prediction for unknown segment " + id);
    if (it->second.label != p.truth)
      throw DataError("prediction truth label disagrees with corpus for " + id);
    if (!it->second.has_previous) {
      m.n_no_previous += 1;
      continue;
    }
    const int prev = static_cast<int>(it->second.prev_label);
    const int target = static_cast<int>(p.truth);
    m.support[prev][target] += 1;
    if (p.predicted == p.truth) m.correct[prev][target] += 1;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

struct EvalReport {
  Confusion confusion{};
  std::array<int, 4> support{};
  std::array<double, 4> recall{};
  double ua = 0.0;
  ConditionalMatrix conditional;
  std::size_t n_predictions = 0;
  bool operator==(const EvalReport&) const = default;
};

inline EvalReport make_eval_report(const PredictionSet& preds,
                                   const Corpus& corpus) {
  EvalReport r;
  r.confusion = confusion_matrix(preds);
  r.ua = unweighted_accuracy(preds);  // also enforces all-classes-present
  for (int c = 0; c < kNumClasses; ++c) {
    for (int p = 0; p < kNumClasses; ++p) r.support[c] += r.confusion[c][p];
    r.recall[c] = static_cast<double>(r.confusion[c][c]) / r.support[c];
  }
  r.conditional = conditional_accuracy(preds, corpus);
  r.n_predictions = preds.size();
  return r;
}

// ---------------------------------------------------------------------------
// File emission. All numeric cells use fixed 6-decimal formatting so reruns
// are byte-identical.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("I/O failure writing " + path.string());
}

}  // namespace detail

inline std::string confusion_csv(const EvalReport& r) {
  std::string s = "truth,ANG,FEA,NEU,POS\n";
  for (int c = 0; c < kNumClasses; ++c) {
    s += kLabelNames[c];
    for (int p = 0; p < kNumClasses; ++p)
      s += "," + std::to_string(r.confusion[c][p]);
    s += '\n';
  }
  return s;
}

inline std::string per_class_csv(const EvalReport& r) {
  std::string s = "class,support,correct,recall\n";
  for (int c = 0; c < kNumClasses; ++c) {
    s += std::string(kLabelNames[c]) + "," + std::to_string(r.support[c]) +
         "," + std::to_string(r.confusion[c][c]) + "," +
         format_fixed6(r.recall[c]) + '\n';
  }
  return s;
}

inline std::string conditional_csv(const EvalReport& r) {
  std::string s =
      "previous,recall_ANG,recall_FEA,recall_NEU,recall_POS,"
      "support_ANG,support_FEA,support_NEU,support_POS\n";
  for (int prev = 0; prev < kNumClasses; ++prev) {
    s += kLabelNames[prev];
    for (int t = 0; t < kNumClasses; ++t)
      s += "," + (r.conditional.support[prev][t] == 0
                      ? std::string()
                      : format_fixed6(r.conditional.recall(prev, t)));
    for (int t = 0; t < kNumClasses; ++t)
      s += "," + std::to_string(r.conditional.support[prev][t]);
    s += '\n';
  }
  return s;
}

inline std::string summary_text(const EvalReport& r) {
  std::string s;
  s += "predictions: " + std::to_string(r.n_predictions) + '\n';
  s += "unweighted accuracy: " + format_fixed6(r.ua) + '\n';
  s += "per-class recall:\n";
  for (int c = 0; c < kNumClasses; ++c)
    s += "  " + std::string(kLabelNames[c]) + ": " + format_fixed6(r.recall[c]) +
         " (support " + std::to_string(r.support[c]) + ")\n";
  s += "segments with no previous segment: " +
       std::to_string(r.conditional.n_no_previous) + '\n';
  return s;
}

struct SweepRow {
  int n_prev = 0;
  int n_next = 0;
  double ua = 0.0;
  bool operator==(const SweepRow&) const = default;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "n_prev,n_next,ua\n";
  for (const SweepRow& r : rows)
    s += std::to_string(r.n_prev) + "," + std::to_string(r.n_next) + "," +
         format_fixed6(r.ua) + '\n';
  return s;
}

// Writes confusion.csv, per_class.csv, conditional.csv, and summary.txt into
// out_dir (created if absent). Deterministic bytes for identical inputs.
inline void write_report(const EvalReport& r,
                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  detail::write_file(out_dir / "confusion.csv", confusion_csv(r));
  detail::write_file(out_dir / "per_class.csv", per_class_csv(r));
  detail::write_file(out_dir / "conditional.csv", conditional_csv(r));
  detail::write_file(out_dir / "summary.txt", summary_text(r));
}

inline void write_sweep(const std::vector<SweepRow>& rows,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  detail::write_file(out_dir / "sweep.csv", sweep_csv(rows));
}

// Serialization of prediction sets (one CSV per fold inside run directories).
inline std::string predictions_csv(const PredictionSet& preds) {
  std::string s = "segment_id,truth,predicted\n";
  for (const auto& [id, p] : preds.by_segment)
    s += id + "," + std::string(label_name(p.truth)) + "," +
         std::string(label_name(p.predicted)) + '\n';
  return s;
}

inline PredictionSet parse_predictions_csv(const std::string& text) {
  PredictionSet out;
  std::size_t pos = 0;
  int line_no = 0;
  bool header = true;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (header) {
      if (line != "segment_id,truth,predicted")
        throw ParseError("bad predictions header", line_no);
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ParseError("bad predictions row", line_no);
    LabeledPrediction p;
    p.truth = label_from_name(line.substr(c1 + 1, c2 - c1 - 1));
    p.predicted = label_from_name(line.substr(c2 + 1));
    if (!out.by_segment.emplace(line.substr(0, c1), p).second)
      throw ParseError("duplicate segment id in predictions", line_no);
  }
  if (header) throw DataError("empty predictions file");
  return out;
}

}  // namespace erc
