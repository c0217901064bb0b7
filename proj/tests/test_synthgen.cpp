#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "erc/synthgen.hpp"

using namespace erc;

namespace {

// Content-level chance/optimum values derived by hand from the emission
// model: with ambiguity a, P(content c | label c) = 1-a and a/3 otherwise.
// For a < 3/4 the likelihood argmax is the content class itself, so the
// optimal UA is 1-a. For a > 3/4 the argmax is the smallest non-content
// class, giving per-class recalls (a, a/3, 0, 0) and UA a/3. At a = 3/4 all
// likelihoods tie and the smallest-index rule yields UA exactly 1/4.
double hand_content_ua(double a) {
  if (a < 0.75) return 1.0 - a;
  if (a > 0.75) return a / 3.0;
  return 0.25;
}

GeneratorSpec text_spec(double ambiguity) {
  GeneratorSpec s = default_generator_spec();
  s.emission_ambiguity = ambiguity;
  s.frames_per_segment = {0, 0};
  s.d_feat = 0;
  return s;
}

}  // namespace

TEST_CASE("stationary distribution solves pi T = pi", "[synthgen]") {
  const GeneratorSpec s = default_generator_spec();
  const auto pi = stationary_distribution(s.transition);
  // The default transition matrix is doubly stochastic => uniform.
  for (int c = 0; c < kNumClasses; ++c)
    REQUIRE(pi[c] == Catch::Approx(0.25).margin(1e-10));

  const std::array<std::array<double, 4>, 4> t = {{{0.5, 0.2, 0.2, 0.1},
                                                   {0.1, 0.6, 0.2, 0.1},
                                                   {0.3, 0.3, 0.3, 0.1},
                                                   {0.25, 0.25, 0.25, 0.25}}};
  const auto p = stationary_distribution(t);
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    double flow = 0.0;
    for (int r = 0; r < kNumClasses; ++r) flow += p[r] * t[r][c];
    REQUIRE(flow == Catch::Approx(p[c]).margin(1e-10));
    REQUIRE(p[c] > 0.0);
    sum += p[c];
  }
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("content-level optimum matches closed form at pinned ambiguities",
          "[synthgen]") {
  for (double a : {0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0}) {
    const GeneratorSpec s = text_spec(a);
    const OracleReport r = bayes_optimal_ua(s, false, 0, 0);
    INFO("ambiguity " << a);
    REQUIRE(r.bayes_ua_no_context == Catch::Approx(hand_content_ua(a)).margin(1e-12));
    REQUIRE(r.method == OracleMethod::exact_enumeration);
    REQUIRE(r.se_no_context == 0.0);
  }
}

TEST_CASE("previous content class cannot improve the content-level optimum "
          "below the tie point",
          "[synthgen]") {
  // For ambiguity a < 3/4 the target observation's own likelihoods have a
  // unique argmax separated by the factor (1-a)/(a/3), while the previous
  // observation's likelihood ratio between any two label hypotheses is a
  // strictly smaller mixture ratio. The joint argmax therefore always
  // equals the target-only argmax, and the optimal UA is identical with
  // and without the previous turn, for every transition matrix.
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    GeneratorSpec s = text_spec(rng.uniform(0.05, 0.70));
    for (int r = 0; r < kNumClasses; ++r) {
      double row_sum = 0.0;
      std::array<double, kNumClasses> row{};
      for (int c = 0; c < kNumClasses; ++c) {
        row[c] = rng.uniform(0.01, 1.0);
        row_sum += row[c];
      }
      for (int c = 0; c < kNumClasses; ++c) s.transition[r][c] = row[c] / row_sum;
    }
    s.initial = stationary_distribution(s.transition);
    const OracleReport r = bayes_optimal_ua(s, true, 0, 0);
    INFO("trial " << trial << " ambiguity " << s.emission_ambiguity);
    REQUIRE(r.bayes_ua_with_prev_context ==
            Catch::Approx(r.bayes_ua_no_context).margin(1e-12));
  }

  // Above the tie point (a > 3/4) the target likelihood argmax is a
  // three-way tie, and the previous turn breaks ties productively when
  // transitions are sticky: context strictly helps.
  GeneratorSpec sticky = text_spec(0.9);
  sticky.transition = context_benefit_spec().transition;
  const OracleReport r = bayes_optimal_ua(sticky, true, 0, 0);
  REQUIRE(r.bayes_ua_with_prev_context > r.bayes_ua_no_context + 0.01);
}

TEST_CASE("Monte Carlo oracle agrees with enumeration", "[synthgen]") {
  GeneratorSpec s = text_spec(0.5);
  const OracleReport exact = bayes_optimal_ua(s, true, 0, 0);
  const OracleReport mc =
      bayes_optimal_ua(s, true, 200000, 7, OracleMethod::monte_carlo);
  REQUIRE(mc.n_samples == 200000);
  REQUIRE(mc.se_no_context > 0.0);
  REQUIRE(mc.se_no_context < 0.01);
  REQUIRE(mc.bayes_ua_no_context ==
          Catch::Approx(exact.bayes_ua_no_context).margin(4.0 * mc.se_no_context));
  REQUIRE(mc.bayes_ua_with_prev_context ==
          Catch::Approx(exact.bayes_ua_with_prev_context)
              .margin(4.0 * mc.se_with_prev_context));
  REQUIRE_THROWS_AS(bayes_optimal_ua(s, true, 50, 7, OracleMethod::monte_carlo),
                    DataError);
}

TEST_CASE("generation is deterministic and prefix-stable", "[synthgen]") {
  const GeneratorSpec s = default_generator_spec();
  const Corpus a = generate(s, 12, 3);
  const Corpus b = generate(s, 12, 3);
  REQUIRE(a == b);
  REQUIRE(serialize_corpus(a) == serialize_corpus(b));

  // Each dialogue draws from its own substream: a longer run extends a
  // shorter one without disturbing earlier dialogues.
  const Corpus longer = generate(s, 20, 3);
  for (int i = 0; i < 12; ++i)
    REQUIRE(longer.dialogues[i] == a.dialogues[i]);

  const Corpus other_seed = generate(s, 12, 4);
  REQUIRE_FALSE(a == other_seed);

  REQUIRE(generate(s, 0, 3).dialogues.empty());
  REQUIRE_THROWS_AS(generate(s, -1, 3), DataError);
}

TEST_CASE("generated corpora stay inside the configured ranges", "[synthgen]") {
  GeneratorSpec s = default_generator_spec();
  const int n = 150;
  const Corpus c = generate(s, n, 0);
  REQUIRE_NOTHROW(validate_corpus(c));
  REQUIRE(static_cast<int>(c.dialogues.size()) == n);
  REQUIRE(c.frame_rate == s.frame_rate);
  REQUIRE(c.d_feat == s.d_feat);

  std::set<std::string> speakers;
  for (const auto& d : c.dialogues) {
    const int len = static_cast<int>(d.segments.size());
    REQUIRE(len >= s.segments_per_dialogue.min);
    REQUIRE(len <= s.segments_per_dialogue.max);
    for (int i = 0; i < len; ++i) {
      const Segment& seg = d.segments[i];
      speakers.insert(seg.speaker_id);
      // Speakers strictly alternate, caller first.
      if (i % 2 == 0) {
        REQUIRE(seg.role == Role::caller);
        REQUIRE(seg.speaker_id == d.dialogue_id + ".caller");
      } else {
        REQUIRE(seg.role == Role::agent);
        REQUIRE(seg.speaker_id == d.dialogue_id + ".agent");
      }
      const int n_tok = static_cast<int>(seg.tokens.size());
      REQUIRE(n_tok >= s.tokens_per_segment.min);
      REQUIRE(n_tok <= s.tokens_per_segment.max);
      REQUIRE(seg.frames.has_value());
      REQUIRE(seg.frames->rows() >= s.frames_per_segment.min);
      REQUIRE(seg.frames->rows() <= s.frames_per_segment.max);
      REQUIRE(seg.frames->cols() == s.d_feat);
      // All tokens in a segment come from one class block.
      const int block = token_class(seg.tokens[0]);
      REQUIRE(block >= 0);
      for (const auto& t : seg.tokens) REQUIRE(token_class(t) == block);
      if (i > 0) {
        const double gap = seg.start_s - d.segments[i - 1].end_s;
        REQUIRE(gap >= -1e-9);
        REQUIRE(gap <= s.inter_segment_gap_s.max + 1e-6);
      } else {
        REQUIRE(seg.start_s == 0.0);
      }
    }
  }
  // Two fresh speakers per dialogue.
  REQUIRE(speakers.size() == 2 * static_cast<std::size_t>(n));

  // Label marginals should sit near the (uniform) stationary distribution,
  // and the emitted-content mismatch rate near the configured ambiguity.
  std::array<double, kNumClasses> freq{};
  std::int64_t mismatches = 0, total = 0, diag = 0, pairs = 0;
  for (const auto& d : c.dialogues) {
    for (std::size_t i = 0; i < d.segments.size(); ++i) {
      const auto& seg = d.segments[i];
      freq[static_cast<int>(seg.label)] += 1.0;
      total += 1;
      if (token_class(seg.tokens[0]) != static_cast<int>(seg.label)) ++mismatches;
      if (i > 0) {
        ++pairs;
        if (d.segments[i - 1].label == seg.label) ++diag;
      }
    }
  }
  for (int k = 0; k < kNumClasses; ++k)
    REQUIRE(freq[k] / static_cast<double>(total) ==
            Catch::Approx(0.25).margin(0.05));
  REQUIRE(static_cast<double>(mismatches) / static_cast<double>(total) ==
          Catch::Approx(s.emission_ambiguity).margin(0.05));
  REQUIRE(static_cast<double>(diag) / static_cast<double>(pairs) ==
          Catch::Approx(0.68).margin(0.05));

  // Frame counts fix durations: rows == duration * frame_rate after the
  // 6-decimal quantization of start/end.
  for (const auto& d : c.dialogues)
    for (const auto& seg : d.segments)
      REQUIRE(static_cast<double>(seg.frames->rows()) ==
              Catch::Approx(seg.duration_s() * s.frame_rate).margin(1e-3));
}

TEST_CASE("zero ambiguity emits only the labeled class", "[synthgen]") {
  GeneratorSpec s = text_spec(0.0);
  const Corpus c = generate(s, 10, 1);
  for (const auto& d : c.dialogues)
    for (const auto& seg : d.segments)
      for (const auto& t : seg.tokens)
        REQUIRE(token_class(t) == static_cast<int>(seg.label));
}

TEST_CASE("token blocks are disjoint and recoverable", "[synthgen]") {
  REQUIRE(class_token(0, 3) == "ang03");
  REQUIRE(class_token(2, 17) == "neu17");
  for (int c = 0; c < kNumClasses; ++c)
    for (int i = 0; i < 30; ++i) REQUIRE(token_class(class_token(c, i)) == c);
  REQUIRE(token_class("hello") == -1);
}

TEST_CASE("spec JSON round-trips and validates", "[synthgen]") {
  const GeneratorSpec s = default_generator_spec();
  const nlohmann::json j = spec_to_json(s);
  const GeneratorSpec back = spec_from_json(j);
  REQUIRE(spec_to_json(back) == j);
  // Same spec => same corpus bytes.
  REQUIRE(serialize_corpus(generate(back, 5, 11)) ==
          serialize_corpus(generate(s, 5, 11)));

  auto reject = [&](auto&& mutate) {
    GeneratorSpec bad = s;
    mutate(bad);
    REQUIRE_THROWS_AS(validate_spec(bad), DataError);
  };
  reject([](GeneratorSpec& g) { g.transition[0][0] += 0.5; });
  reject([](GeneratorSpec& g) { g.transition[1][2] = -0.1; });
  reject([](GeneratorSpec& g) { g.emission_ambiguity = 1.5; });
  reject([](GeneratorSpec& g) { g.speakers_per_dialogue = 3; });
  reject([](GeneratorSpec& g) { g.segments_per_dialogue = {0, 4}; });
  reject([](GeneratorSpec& g) { g.frames_per_segment = {0, 5}; });
  reject([](GeneratorSpec& g) { g.noise_sigma = 0.0; });
  reject([](GeneratorSpec& g) { g.frame_rate = -1.0; });
  reject([](GeneratorSpec& g) { g.class_means[2].pop_back(); });
  reject([](GeneratorSpec& g) {
    g.tokens_per_segment = {0, 0};
    g.frames_per_segment = {0, 0};
  });
  reject([](GeneratorSpec& g) {
    g.frames_per_segment = {0, 0};
    g.tokens_per_segment = {0, 3};
  });
}

TEST_CASE("frame-level optimum gains from context when frames are noisy",
          "[synthgen]") {
  // Rationale: raw frames give graded likelihoods, so the previous turn
  // shifts the posterior and context strictly helps (unlike the
  // content-class observable, where below the tie point it provably cannot).
  GeneratorSpec s = context_benefit_spec();
  const OracleReport r = bayes_frame_ua(s, 60000, 5);
  REQUIRE(r.method == OracleMethod::monte_carlo);
  REQUIRE(r.bayes_ua_no_context > 0.25);
  REQUIRE(r.bayes_ua_no_context < 1.0);
  const double gain = r.bayes_ua_with_prev_context - r.bayes_ua_no_context;
  REQUIRE(gain > 3.0 * (r.se_no_context + r.se_with_prev_context));

  // Near-noiseless frames pin down the emitted class, collapsing the
  // frame-level optimum onto the content-level one (where context is
  // worthless).
  GeneratorSpec sharp = s;
  sharp.noise_sigma = 0.02;
  const OracleReport rs = bayes_frame_ua(sharp, 60000, 5);
  const OracleReport exact = bayes_optimal_ua(sharp, true, 0, 0);
  REQUIRE(rs.bayes_ua_no_context ==
          Catch::Approx(exact.bayes_ua_no_context).margin(0.01));
  REQUIRE(rs.bayes_ua_with_prev_context ==
          Catch::Approx(exact.bayes_ua_no_context).margin(0.01));

  GeneratorSpec text = text_spec(0.5);
  REQUIRE_THROWS_AS(bayes_frame_ua(text, 60000, 5), DataError);
  REQUIRE_THROWS_AS(bayes_frame_ua(s, 10, 5), DataError);
}

TEST_CASE("oracle report serializes to JSON", "[synthgen]") {
  OracleReport r;
  r.bayes_ua_no_context = 0.5;
  r.bayes_ua_with_prev_context = 0.625;
  r.n_samples = 1000;
  r.method = OracleMethod::monte_carlo;
  const auto j = oracle_to_json(r);
  REQUIRE(j.at("bayes_ua_no_context") == 0.5);
  REQUIRE(j.at("method") == "monte_carlo");
  REQUIRE(j.at("n_samples") == 1000);
}
