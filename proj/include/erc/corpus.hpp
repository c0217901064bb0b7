#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "erc/common.hpp"

namespace erc {

using Matrix = Eigen::MatrixXd;

enum class Role { caller, agent };

inline std::string_view role_name(Role r) {
  return r == Role::caller ? "caller" : "agent";
}

inline Role role_from_name(std::string_view name) {
  if (name == "caller") return Role::caller;
  if (name == "agent") return Role::agent;
  throw DataError("unknown role: " + std::string(name));
}

// One annotated speech turn unit: tokens, timing, optional acoustic frames,
// and a single emotion label.
struct Segment {
  std::string segment_id;
  std::string speaker_id;
  Role role = Role::caller;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<std::string> tokens;
  std::optional<Matrix> frames;  // [n_frames x d_feat]
  EmotionLabel label = EmotionLabel::NEU;

  double duration_s() const { return end_s - start_s; }

  bool operator==(const Segment& o) const {
    if (segment_id != o.segment_id || speaker_id != o.speaker_id ||
        role != o.role || start_s != o.start_s || end_s != o.end_s ||
        tokens != o.tokens || label != o.label)
      return false;
    if (frames.has_value() != o.frames.has_value()) return false;
    if (frames && (frames->rows() != o.frames->rows() ||
                   frames->cols() != o.frames->cols() || *frames != *o.frames))
      return false;
    return true;
  }
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<Segment> segments;  // ordered by start_s

  bool operator==(const Dialogue& o) const {
    return dialogue_id == o.dialogue_id && segments == o.segments;
  }
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  double frame_rate = 0.0;  // frames/second; 0 for text-only corpora
  int d_feat = 0;

  bool operator==(const Corpus& o) const {
    return frame_rate == o.frame_rate && d_feat == o.d_feat &&
           dialogues == o.dialogues;
  }

  std::size_t n_segments() const {
    std::size_t n = 0;
    for (const auto& d : dialogues) n += d.segments.size();
    return n;
  }

  // Derived token set, sorted.
  std::vector<std::string> vocabulary() const {
    std::set<std::string> v;
    for (const auto& d : dialogues)
      for (const auto& s : d.segments) v.insert(s.tokens.begin(), s.tokens.end());
    return {v.begin(), v.end()};
  }

  const Dialogue& dialogue(const std::string& id) const {
    for (const auto& d : dialogues)
      if (d.dialogue_id == id) return d;
    throw DataError("unknown dialogue: " + id);
  }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void validate_corpus(const Corpus& corpus) {
  std::set<std::string> seen_ids;
  std::set<std::string> seen_dialogues;
  for (const auto& d : corpus.dialogues) {
    if (!seen_dialogues.insert(d.dialogue_id).second)
      throw DataError("duplicate dialogue id " + d.dialogue_id);
    const Segment* prev = nullptr;
    std::map<std::string, double> last_end_by_speaker;
    for (const auto& s : d.segments) {
      const std::string where = d.dialogue_id + "/" + s.segment_id;
      if (!(s.end_s > s.start_s))
        throw DataError("segment " + where + ": end_s must exceed start_s");
      if (!s.frames && s.tokens.empty())
        throw DataError("segment " + where + ": tokens empty and no frames");
      if (s.frames) {
        if (corpus.frame_rate <= 0.0)
          throw DataError("segment " + where +
                          " has frames but corpus frame_rate is 0");
        const auto expect = static_cast<Eigen::Index>(
            std::llround(s.duration_s() * corpus.frame_rate));
        if (s.frames->rows() != expect)
          throw DataError("segment " + where + ": frame rows " +
                          std::to_string(s.frames->rows()) +
                          " != round(duration*frame_rate) = " +
                          std::to_string(expect));
        if (s.frames->cols() != corpus.d_feat)
          throw DataError("segment " + where + ": frame cols " +
                          std::to_string(s.frames->cols()) + " != d_feat " +
                          std::to_string(corpus.d_feat));
      }
      if (prev && !(prev->start_s < s.start_s))
        throw DataError("dialogue " + d.dialogue_id +
                        ": segments not strictly ordered by start_s at " +
                        s.segment_id);
      auto it = last_end_by_speaker.find(s.speaker_id);
      if (it != last_end_by_speaker.end() && s.start_s < it->second)
        throw DataError("dialogue " + d.dialogue_id + ": speaker " +
                        s.speaker_id + " overlaps itself at " + s.segment_id);
      last_end_by_speaker[s.speaker_id] =
          std::max(s.end_s, it == last_end_by_speaker.end() ? s.end_s : it->second);
      if (!seen_ids.insert(where).second)
        throw DataError("duplicate segment id " + where);
      prev = &s;
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization: line-delimited JSON, one dialogue per line, preceded by a
// header line carrying frame_rate and d_feat. Keys are emitted in sorted
// order; seconds use 6-decimal fixed point; frame values use shortest
// round-trip decimals. Loading what save_corpus wrote re-serializes
// byte-identically.
// ---------------------------------------------------------------------------

namespace detail {

inline void append_json_string(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

}  // namespace detail

inline std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  out += "{\"d_feat\":" + std::to_string(corpus.d_feat) +
         ",\"format\":\"erc-corpus-v1\",\"frame_rate\":" +
         format_fixed6(corpus.frame_rate) + "}\n";
  for (const auto& d : corpus.dialogues) {
    out += "{\"dialogue_id\":";
    detail::append_json_string(out, d.dialogue_id);
    out += ",\"segments\":[";
    bool first_seg = true;
    for (const auto& s : d.segments) {
      if (!first_seg) out += ',';
      first_seg = false;
      out += "{\"end_s\":" + format_fixed6(s.end_s);
      if (s.frames) {
        out += ",\"frames\":[";
        for (Eigen::Index r = 0; r < s.frames->rows(); ++r) {
          if (r) out += ',';
          out += '[';
          for (Eigen::Index c = 0; c < s.frames->cols(); ++c) {
            if (c) out += ',';
            out += format_shortest((*s.frames)(r, c));
          }
          out += ']';
        }
        out += ']';
      }
      out += ",\"label\":\"";
      out += label_name(s.label);
      out += "\",\"role\":\"";
      out += role_name(s.role);
      out += "\",\"segment_id\":";
      detail::append_json_string(out, s.segment_id);
      out += ",\"speaker_id\":";
      detail::append_json_string(out, s.speaker_id);
      out += ",\"start_s\":" + format_fixed6(s.start_s);
      out += ",\"tokens\":[";
      for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        if (i) out += ',';
        detail::append_json_string(out, s.tokens[i]);
      }
      out += "]}";
    }
    out += "]}\n";
  }
  return out;
}

inline Corpus parse_corpus(std::istream& in) {
  using nlohmann::json;
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    try {
      if (!have_header) {
        if (!j.contains("frame_rate") || !j.contains("d_feat"))
          throw std::runtime_error("missing frame_rate/d_feat in header");
        corpus.frame_rate = j.at("frame_rate").get<double>();
        corpus.d_feat = j.at("d_feat").get<int>();
        have_header = true;
        continue;
      }
      Dialogue d;
      d.dialogue_id = j.at("dialogue_id").get<std::string>();
      for (const auto& js : j.at("segments")) {
        Segment s;
        s.segment_id = js.at("segment_id").get<std::string>();
        s.speaker_id = js.at("speaker_id").get<std::string>();
        s.role = role_from_name(js.at("role").get<std::string>());
        s.start_s = js.at("start_s").get<double>();
        s.end_s = js.at("end_s").get<double>();
        for (const auto& t : js.at("tokens")) s.tokens.push_back(t.get<std::string>());
        s.label = label_from_name(js.at("label").get<std::string>());
        if (js.contains("frames")) {
          const auto& jf = js.at("frames");
          const Eigen::Index rows = static_cast<Eigen::Index>(jf.size());
          Matrix m(rows, corpus.d_feat);
          for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = jf.at(static_cast<std::size_t>(r));
            if (static_cast<int>(row.size()) != corpus.d_feat)
              throw std::runtime_error("frame row width != d_feat");
            for (int c = 0; c < corpus.d_feat; ++c)
              m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
          }
          s.frames = std::move(m);
        }
        d.segments.push_back(std::move(s));
      }
      corpus.dialogues.push_back(std::move(d));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_header) throw ParseError("empty corpus file (missing header)", line_no);
  validate_corpus(corpus);
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return parse_corpus(in);
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  validate_corpus(corpus);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  out << serialize_corpus(corpus);
  if (!out) throw DataError("I/O failure writing " + path);
}

// ---------------------------------------------------------------------------
// Descriptive analytics
// ---------------------------------------------------------------------------

struct ClassStats {
  std::size_t segments = 0;
  std::size_t speakers = 0;
  std::size_t dialogues = 0;
  double total_duration_min = 0.0;
  double mean_duration_s = 0.0;
  std::size_t vocab_size = 0;
  double avg_word_count = 0.0;
};

struct CorpusStats {
  std::array<ClassStats, kNumClasses> per_class;
  ClassStats total;
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
  if (corpus.n_segments() == 0) throw DataError("corpus_stats: empty corpus");
  CorpusStats st;
  std::array<std::set<std::string>, kNumClasses> speakers, dialogues, vocab;
  std::set<std::string> all_speakers, all_dialogues, all_vocab;
  std::array<double, kNumClasses> dur_s{}, words{};
  double total_dur_s = 0.0, total_words = 0.0;
  for (const auto& d : corpus.dialogues) {
    for (const auto& s : d.segments) {
      const int c = static_cast<int>(s.label);
      st.per_class[c].segments += 1;
      speakers[c].insert(s.speaker_id);
      dialogues[c].insert(d.dialogue_id);
      vocab[c].insert(s.tokens.begin(), s.tokens.end());
      dur_s[c] += s.duration_s();
      words[c] += static_cast<double>(s.tokens.size());
      all_speakers.insert(s.speaker_id);
      all_dialogues.insert(d.dialogue_id);
      all_vocab.insert(s.tokens.begin(), s.tokens.end());
      total_dur_s += s.duration_s();
      total_words += static_cast<double>(s.tokens.size());
    }
  }
  for (int c = 0; c < kNumClasses; ++c) {
    auto& p = st.per_class[c];
    p.speakers = speakers[c].size();
    p.dialogues = dialogues[c].size();
    p.total_duration_min = dur_s[c] / 60.0;
    p.mean_duration_s = p.segments ? dur_s[c] / static_cast<double>(p.segments) : 0.0;
    p.vocab_size = vocab[c].size();
    p.avg_word_count = p.segments ? words[c] / static_cast<double>(p.segments) : 0.0;
  }
  st.total.segments = corpus.n_segments();
  st.total.speakers = all_speakers.size();
  st.total.dialogues = all_dialogues.size();
  st.total.total_duration_min = total_dur_s / 60.0;
  st.total.mean_duration_s = total_dur_s / static_cast<double>(st.total.segments);
  st.total.vocab_size = all_vocab.size();
  st.total.avg_word_count = total_words / static_cast<double>(st.total.segments);
  return st;
}

// Empirical previous -> target emotion transitions. "Previous" is the
// immediately preceding segment by start_s within the same dialogue,
// regardless of speaker.
struct TransitionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};
  std::array<std::array<double, kNumClasses>, kNumClasses> probabilities{};
  std::int64_t min_count = 0;
  std::array<bool, kNumClasses> row_included{};

  std::int64_t row_sum(int row) const {
    std::int64_t s = 0;
    for (int c = 0; c < kNumClasses; ++c) s += counts[row][c];
    return s;
  }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (int r = 0; r < kNumClasses; ++r) s += row_sum(r);
    return s;
  }
};

inline TransitionMatrix transition_matrix(const Corpus& corpus,
                                          std::int64_t min_count = 0) {
  if (min_count < 0) throw DataError("transition_matrix: min_count must be >= 0");
  TransitionMatrix tm;
  tm.min_count = min_count;
  for (const auto& d : corpus.dialogues) {
    for (std::size_t i = 1; i < d.segments.size(); ++i) {
      const int prev = static_cast<int>(d.segments[i - 1].label);
      const int cur = static_cast<int>(d.segments[i].label);
      tm.counts[prev][cur] += 1;
    }
  }
  for (int r = 0; r < kNumClasses; ++r) {
    const std::int64_t rs = tm.row_sum(r);
    tm.row_included[r] = rs >= min_count && rs > 0;
    for (int c = 0; c < kNumClasses; ++c)
      tm.probabilities[r][c] =
          rs > 0 ? static_cast<double>(tm.counts[r][c]) / static_cast<double>(rs)
                 : 0.0;
  }
  return tm;
}

enum class GapDirection { previous_to_target, target_to_next };

// Distribution of the silent gap between adjacent segments. Zero (and
// clamped negative) gaps count as contiguous and stay out of the bins;
// boundary segments lacking a neighbor in the chosen direction count as
// missing.
struct GapHistogram {
  double bin_width_s = 1.0;
  std::vector<std::pair<double, std::int64_t>> bins;  // (lower_s, count)
  GapDirection direction = GapDirection::previous_to_target;
  std::int64_t n_contiguous = 0;
  std::int64_t n_missing = 0;

  std::int64_t binned_total() const {
    std::int64_t s = 0;
    for (const auto& [lo, n] : bins) s += n;
    return s;
  }
};

inline GapHistogram gap_histogram(const Corpus& corpus, GapDirection direction,
                                  double bin_width_s) {
  if (!(bin_width_s > 0.0))
    throw DataError("gap_histogram: bin_width_s must be > 0");
  GapHistogram h;
  h.bin_width_s = bin_width_s;
  h.direction = direction;
  std::map<std::int64_t, std::int64_t> bin_counts;
  for (const auto& d : corpus.dialogues) {
    // previous_to_target: each dialogue's first segment lacks a previous
    // neighbor; target_to_next: the last one lacks a next neighbor.
    if (!d.segments.empty()) h.n_missing += 1;
    for (std::size_t i = 1; i < d.segments.size(); ++i) {
      const Segment& a = d.segments[i - 1];
      const Segment& b = d.segments[i];
      double gap = b.start_s - a.end_s;
      if (gap < 0.0) gap = 0.0;  // overlapping cross-speaker segments
      if (gap == 0.0) {
        h.n_contiguous += 1;
      } else {
        bin_counts[static_cast<std::int64_t>(std::floor(gap / bin_width_s))] += 1;
      }
    }
  }
  if (!bin_counts.empty()) {
    const std::int64_t last = bin_counts.rbegin()->first;
    for (std::int64_t b = 0; b <= last; ++b) {
      auto it = bin_counts.find(b);
      h.bins.emplace_back(static_cast<double>(b) * bin_width_s,
                          it == bin_counts.end() ? 0 : it->second);
    }
  }
  return h;
}

}  // namespace erc
