#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "erc/common.hpp"
#include "erc/corpus.hpp"

namespace erc {

// Context assembly at two scales:
//  - token scale: a "blind" budget of preceding/following dialogue tokens,
//    crossing turn and speaker boundaries without separators;
//  - turn scale: the nearest previous/next speech turn filtered by speaker
//    scope (same / opposite / any), one segment per direction.
// Samples carry positions in prev ++ target ++ next order plus a role mask
// distinguishing context from target positions.

enum class Scale { tokens, turns };
enum class Direction { previous, next, both, none };
enum class SpeakerScope { same, opposite, all };
enum class Modality { text, acoustic };

inline std::string_view to_string(Scale s) {
  return s == Scale::tokens ? "tokens" : "turns";
}
inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::previous: return "previous";
    case Direction::next: return "next";
    case Direction::both: return "both";
    default: return "none";
  }
}
inline std::string_view to_string(SpeakerScope s) {
  switch (s) {
    case SpeakerScope::same: return "same";
    case SpeakerScope::opposite: return "opposite";
    default: return "all";
  }
}
inline std::string_view to_string(Modality m) {
  return m == Modality::text ? "text" : "acoustic";
}

inline Scale scale_from_string(std::string_view s) {
  if (s == "tokens") return Scale::tokens;
  if (s == "turns") return Scale::turns;
  throw DataError("unknown scale: " + std::string(s));
}
inline Direction direction_from_string(std::string_view s) {
  if (s == "previous") return Direction::previous;
  if (s == "next") return Direction::next;
  if (s == "both") return Direction::both;
  if (s == "none") return Direction::none;
  throw DataError("unknown direction: " + std::string(s));
}
inline SpeakerScope scope_from_string(std::string_view s) {
  if (s == "same") return SpeakerScope::same;
  if (s == "opposite") return SpeakerScope::opposite;
  if (s == "all") return SpeakerScope::all;
  throw DataError("unknown speaker scope: " + std::string(s));
}
inline Modality modality_from_string(std::string_view s) {
  if (s == "text") return Modality::text;
  if (s == "acoustic") return Modality::acoustic;
  throw DataError("unknown modality: " + std::string(s));
}

struct ContextPolicy {
  Scale scale = Scale::turns;
  Direction direction = Direction::none;
  int n_prev_tokens = 0;   // token scale only
  int n_next_tokens = 0;   // token scale only
  SpeakerScope speaker_scope = SpeakerScope::all;  // turn scale only
  Modality modality = Modality::text;
  double max_input_s = 6.5;  // acoustic cap on total assembled duration
};

inline void validate_policy(const ContextPolicy& p) {
  if (p.n_prev_tokens < 0 || p.n_next_tokens < 0)
    throw DataError("token window sizes must be >= 0");
  if (p.scale == Scale::tokens) {
    if (p.modality == Modality::acoustic)
      throw DataError("token-scale context requires text modality");
    if (p.direction == Direction::none &&
        (p.n_prev_tokens > 0 || p.n_next_tokens > 0))
      throw DataError("direction none requires zero token windows");
    if (p.direction == Direction::previous && p.n_next_tokens > 0)
      throw DataError("direction previous requires n_next_tokens = 0");
    if (p.direction == Direction::next && p.n_prev_tokens > 0)
      throw DataError("direction next requires n_prev_tokens = 0");
  }
  if (p.modality == Modality::acoustic && !(p.max_input_s > 0.0))
    throw DataError("max_input_s must be > 0");
}

inline nlohmann::json policy_to_json(const ContextPolicy& p) {
  return {{"scale", std::string(to_string(p.scale))},
          {"direction", std::string(to_string(p.direction))},
          {"n_prev_tokens", p.n_prev_tokens},
          {"n_next_tokens", p.n_next_tokens},
          {"speaker_scope", std::string(to_string(p.speaker_scope))},
          {"modality", std::string(to_string(p.modality))},
          {"max_input_s", p.max_input_s}};
}

inline ContextPolicy policy_from_json(const nlohmann::json& j) {
  ContextPolicy p;
  if (j.contains("scale")) p.scale = scale_from_string(j.at("scale").get<std::string>());
  if (j.contains("direction"))
    p.direction = direction_from_string(j.at("direction").get<std::string>());
  if (j.contains("n_prev_tokens")) j.at("n_prev_tokens").get_to(p.n_prev_tokens);
  if (j.contains("n_next_tokens")) j.at("n_next_tokens").get_to(p.n_next_tokens);
  if (j.contains("speaker_scope"))
    p.speaker_scope = scope_from_string(j.at("speaker_scope").get<std::string>());
  if (j.contains("modality"))
    p.modality = modality_from_string(j.at("modality").get<std::string>());
  if (j.contains("max_input_s")) j.at("max_input_s").get_to(p.max_input_s);
  validate_policy(p);
  return p;
}

// Role mask values per assembled position.
inline constexpr std::uint8_t kRoleContext = 0;
inline constexpr std::uint8_t kRoleTarget = 1;

struct ContextualSample {
  std::string dialogue_id;
  std::string segment_id;
  std::string speaker_id;  // target speaker, used for fold filtering
  std::vector<std::string> prev_tokens;
  std::vector<std::string> target_tokens;
  std::vector<std::string> next_tokens;
  EmotionLabel label = EmotionLabel::NEU;

  std::size_t n_positions() const {
    return prev_tokens.size() + target_tokens.size() + next_tokens.size();
  }
  // prev ++ target ++ next
  std::vector<std::string> positions() const {
    std::vector<std::string> out;
    out.reserve(n_positions());
    out.insert(out.end(), prev_tokens.begin(), prev_tokens.end());
    out.insert(out.end(), target_tokens.begin(), target_tokens.end());
    out.insert(out.end(), next_tokens.begin(), next_tokens.end());
    return out;
  }
  std::vector<std::uint8_t> role_mask() const {
    std::vector<std::uint8_t> m(n_positions(), kRoleContext);
    for (std::size_t i = prev_tokens.size();
         i < prev_tokens.size() + target_tokens.size(); ++i)
      m[i] = kRoleTarget;
    return m;
  }
  bool empty_context() const { return prev_tokens.empty() && next_tokens.empty(); }

  bool operator==(const ContextualSample&) const = default;
};

struct AcousticContextualSample {
  std::string dialogue_id;
  std::string segment_id;
  std::string speaker_id;
  Matrix prev_frames{0, 0};
  Matrix target_frames{0, 0};
  Matrix next_frames{0, 0};
  EmotionLabel label = EmotionLabel::NEU;
  double total_duration_s = 0.0;

  Eigen::Index n_positions() const {
    return prev_frames.rows() + target_frames.rows() + next_frames.rows();
  }
  Matrix positions() const {
    const Eigen::Index cols = target_frames.cols();
    Matrix out(n_positions(), cols);
    Eigen::Index r = 0;
    for (const Matrix* m : {&prev_frames, &target_frames, &next_frames}) {
      if (m->rows() > 0) out.middleRows(r, m->rows()) = *m;
      r += m->rows();
    }
    return out;
  }
  std::vector<std::uint8_t> role_mask() const {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(n_positions()),
                                kRoleContext);
    for (Eigen::Index i = prev_frames.rows();
         i < prev_frames.rows() + target_frames.rows(); ++i)
      m[static_cast<std::size_t>(i)] = kRoleTarget;
    return m;
  }
  bool empty_context() const {
    return prev_frames.rows() == 0 && next_frames.rows() == 0;
  }

  bool operator==(const AcousticContextualSample& o) const {
    return dialogue_id == o.dialogue_id && segment_id == o.segment_id &&
           speaker_id == o.speaker_id && label == o.label &&
           total_duration_s == o.total_duration_s &&
           prev_frames.rows() == o.prev_frames.rows() &&
           next_frames.rows() == o.next_frames.rows() &&
           target_frames.rows() == o.target_frames.rows() &&
           prev_frames == o.prev_frames && target_frames == o.target_frames &&
           next_frames == o.next_frames;
  }
};

namespace detail {

struct SegmentRef {
  const Dialogue* dialogue = nullptr;
  std::size_t index = 0;
};

inline SegmentRef find_segment(const Corpus& corpus, const std::string& dialogue_id,
                               const std::string& segment_id) {
  const Dialogue& d = corpus.dialogue(dialogue_id);
  for (std::size_t i = 0; i < d.segments.size(); ++i)
    if (d.segments[i].segment_id == segment_id) return {&d, i};
  throw DataError("unknown segment " + segment_id + " in dialogue " + dialogue_id);
}

inline bool scope_match(const Segment& target, const Segment& candidate,
                        SpeakerScope scope) {
  switch (scope) {
    case SpeakerScope::same: return candidate.speaker_id == target.speaker_id;
    case SpeakerScope::opposite: return candidate.speaker_id != target.speaker_id;
    default: return true;
  }
}

// Nearest matching turn index in the given direction, or -1.
inline std::ptrdiff_t nearest_turn(const Dialogue& d, std::size_t idx, bool forward,
                                   SpeakerScope scope) {
  const Segment& target = d.segments[idx];
  if (forward) {
    for (std::size_t j = idx + 1; j < d.segments.size(); ++j)
      if (scope_match(target, d.segments[j], scope))
        return static_cast<std::ptrdiff_t>(j);
  } else {
    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(idx) - 1; j >= 0; --j)
      if (scope_match(target, d.segments[static_cast<std::size_t>(j)], scope))
        return j;
  }
  return -1;
}

inline const Matrix& frames_of(const Corpus& corpus, const Dialogue& d,
                               const Segment& s) {
  if (corpus.frame_rate <= 0.0)
    throw DataError("corpus has no frame_rate; acoustic context unavailable");
  if (!s.frames)
    throw DataError("segment " + d.dialogue_id + "/" + s.segment_id +
                    " has no frames");
  return *s.frames;
}

}  // namespace detail

// Number of frames that fit in the duration cap.
inline Eigen::Index frame_budget(double max_input_s, double frame_rate) {
  return static_cast<Eigen::Index>(std::floor(max_input_s * frame_rate + 1e-9));
}

// ---------------------------------------------------------------------------
// Token-scale context: last n_prev tokens of the dialogue's token stream
// strictly before the target segment, and the first n_next strictly after,
// truncated at dialogue boundaries.
// ---------------------------------------------------------------------------

inline ContextualSample token_context(const Corpus& corpus,
                                      const std::string& dialogue_id,
                                      const std::string& segment_id, int n_prev,
                                      int n_next) {
  if (n_prev < 0 || n_next < 0) throw DataError("token window sizes must be >= 0");
  const auto ref = detail::find_segment(corpus, dialogue_id, segment_id);
  const Dialogue& d = *ref.dialogue;
  const Segment& target = d.segments[ref.index];

  ContextualSample sample;
  sample.dialogue_id = dialogue_id;
  sample.segment_id = segment_id;
  sample.speaker_id = target.speaker_id;
  sample.target_tokens = target.tokens;
  sample.label = target.label;

  // Walk backward through earlier segments collecting up to n_prev tokens.
  std::vector<std::string> rev;
  for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(ref.index) - 1;
       j >= 0 && static_cast<int>(rev.size()) < n_prev; --j) {
    const auto& toks = d.segments[static_cast<std::size_t>(j)].tokens;
    for (auto it = toks.rbegin();
         it != toks.rend() && static_cast<int>(rev.size()) < n_prev; ++it)
      rev.push_back(*it);
  }
  sample.prev_tokens.assign(rev.rbegin(), rev.rend());

  for (std::size_t j = ref.index + 1;
       j < d.segments.size() && static_cast<int>(sample.next_tokens.size()) < n_next;
       ++j) {
    for (const auto& t : d.segments[j].tokens) {
      if (static_cast<int>(sample.next_tokens.size()) >= n_next) break;
      sample.next_tokens.push_back(t);
    }
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Turn-scale context: the nearest segment in the requested direction whose
// speaker matches the scope. Empty context when no such turn exists.
// ---------------------------------------------------------------------------

inline ContextualSample turn_context(const Corpus& corpus,
                                     const std::string& dialogue_id,
                                     const std::string& segment_id,
                                     Direction direction, SpeakerScope scope) {
  if (direction != Direction::previous && direction != Direction::next &&
      direction != Direction::both && direction != Direction::none)
    throw DataError("invalid turn-context direction");
  const auto ref = detail::find_segment(corpus, dialogue_id, segment_id);
  const Dialogue& d = *ref.dialogue;
  const Segment& target = d.segments[ref.index];

  ContextualSample sample;
  sample.dialogue_id = dialogue_id;
  sample.segment_id = segment_id;
  sample.speaker_id = target.speaker_id;
  sample.target_tokens = target.tokens;
  sample.label = target.label;

  if (direction == Direction::previous || direction == Direction::both) {
    const auto j = detail::nearest_turn(d, ref.index, false, scope);
    if (j >= 0) sample.prev_tokens = d.segments[static_cast<std::size_t>(j)].tokens;
  }
  if (direction == Direction::next || direction == Direction::both) {
    const auto j = detail::nearest_turn(d, ref.index, true, scope);
    if (j >= 0) sample.next_tokens = d.segments[static_cast<std::size_t>(j)].tokens;
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Acoustic turn-scale context with a hard total-duration cap. Context frames
// are discarded farthest-from-target first (a previous turn loses frames
// from its start, a next turn from its end), keeping the region adjacent to
// the target. The target itself is never truncated.
// ---------------------------------------------------------------------------

inline AcousticContextualSample acoustic_turn_context(
    const Corpus& corpus, const std::string& dialogue_id,
    const std::string& segment_id, Direction direction, SpeakerScope scope,
    double max_input_s) {
  if (!(max_input_s > 0.0)) throw DataError("max_input_s must be > 0");
  const auto ref = detail::find_segment(corpus, dialogue_id, segment_id);
  const Dialogue& d = *ref.dialogue;
  const Segment& target = d.segments[ref.index];
  const Matrix& target_frames = detail::frames_of(corpus, d, target);

  const Eigen::Index budget = frame_budget(max_input_s, corpus.frame_rate);
  if (target_frames.rows() > budget)
    throw DataError("target segment " + segment_id + " alone exceeds the " +
                    format_fixed6(max_input_s) + "s input cap");

  AcousticContextualSample sample;
  sample.dialogue_id = dialogue_id;
  sample.segment_id = segment_id;
  sample.speaker_id = target.speaker_id;
  sample.target_frames = target_frames;
  sample.label = target.label;

  const Segment* prev_seg = nullptr;
  const Segment* next_seg = nullptr;
  if (direction == Direction::previous || direction == Direction::both) {
    const auto j = detail::nearest_turn(d, ref.index, false, scope);
    if (j >= 0) prev_seg = &d.segments[static_cast<std::size_t>(j)];
  }
  if (direction == Direction::next || direction == Direction::both) {
    const auto j = detail::nearest_turn(d, ref.index, true, scope);
    if (j >= 0) next_seg = &d.segments[static_cast<std::size_t>(j)];
  }

  Eigen::Index prev_rows = 0, next_rows = 0;
  const Matrix* prev_all = nullptr;
  const Matrix* next_all = nullptr;
  if (prev_seg) {
    prev_all = &detail::frames_of(corpus, d, *prev_seg);
    prev_rows = prev_all->rows();
  }
  if (next_seg) {
    next_all = &detail::frames_of(corpus, d, *next_seg);
    next_rows = next_all->rows();
  }

  // Drop context frames until the budget holds, always removing the frame
  // whose timestamp lies farthest from the target's span.
  Eigen::Index excess = prev_rows + next_rows + target_frames.rows() - budget;
  while (excess > 0) {
    double prev_dist = -1.0, next_dist = -1.0;
    if (prev_rows > 0 && prev_seg) {
      const double first_kept_time =
          prev_seg->start_s +
          static_cast<double>(prev_all->rows() - prev_rows) / corpus.frame_rate;
      prev_dist = target.start_s - first_kept_time;
    }
    if (next_rows > 0 && next_seg) {
      const double last_kept_time =
          next_seg->start_s + static_cast<double>(next_rows) / corpus.frame_rate;
      next_dist = last_kept_time - target.end_s;
    }
    if (prev_dist >= next_dist)
      --prev_rows;
    else
      --next_rows;
    --excess;
  }

  if (prev_rows > 0 && prev_all)
    sample.prev_frames = prev_all->bottomRows(prev_rows);
  else
    sample.prev_frames = Matrix(0, target_frames.cols());
  if (next_rows > 0 && next_all)
    sample.next_frames = next_all->topRows(next_rows);
  else
    sample.next_frames = Matrix(0, target_frames.cols());

  sample.total_duration_s =
      static_cast<double>(sample.n_positions()) / corpus.frame_rate;
  return sample;
}

// ---------------------------------------------------------------------------
// Dataset assembly: one sample per segment, ordered by (dialogue_id, start_s).
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::pair<const Dialogue*, const Segment*>> ordered_segments(
    const Corpus& corpus) {
  std::vector<std::pair<const Dialogue*, const Segment*>> refs;
  refs.reserve(corpus.n_segments());
  for (const auto& d : corpus.dialogues)
    for (const auto& s : d.segments) refs.emplace_back(&d, &s);
  std::stable_sort(refs.begin(), refs.end(), [](const auto& a, const auto& b) {
    if (a.first->dialogue_id != b.first->dialogue_id)
      return a.first->dialogue_id < b.first->dialogue_id;
    return a.second->start_s < b.second->start_s;
  });
  return refs;
}

}  // namespace detail

inline std::vector<ContextualSample> build_dataset(const Corpus& corpus,
                                                   const ContextPolicy& policy) {
  validate_policy(policy);
  if (policy.modality != Modality::text)
    throw DataError("build_dataset produces text samples; policy is acoustic");
  std::vector<ContextualSample> out;
  out.reserve(corpus.n_segments());
  for (const auto& [d, s] : detail::ordered_segments(corpus)) {
    if (s->tokens.empty())
      throw DataError("segment " + s->segment_id + " has no tokens");
    if (policy.scale == Scale::tokens) {
      const int np = policy.direction == Direction::none ? 0 : policy.n_prev_tokens;
      const int nn = policy.direction == Direction::none ? 0 : policy.n_next_tokens;
      out.push_back(
          token_context(corpus, d->dialogue_id, s->segment_id, np, nn));
    } else {
      out.push_back(turn_context(corpus, d->dialogue_id, s->segment_id,
                                 policy.direction, policy.speaker_scope));
    }
  }
  return out;
}

inline std::vector<AcousticContextualSample> build_acoustic_dataset(
    const Corpus& corpus, const ContextPolicy& policy) {
  validate_policy(policy);
  if (policy.modality != Modality::acoustic)
    throw DataError("build_acoustic_dataset requires an acoustic policy");
  if (policy.scale != Scale::turns)
    throw DataError("acoustic context is turn-scale only");
  std::vector<AcousticContextualSample> out;
  out.reserve(corpus.n_segments());
  for (const auto& [d, s] : detail::ordered_segments(corpus))
    out.push_back(acoustic_turn_context(corpus, d->dialogue_id, s->segment_id,
                                        policy.direction, policy.speaker_scope,
                                        policy.max_input_s));
  return out;
}

}  // namespace erc
