#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "erc/corpus.hpp"
#include "erc/evaluation.hpp"
#include "erc/model.hpp"
#include "erc/rng.hpp"
#include "erc/windowing.hpp"

namespace erc {

// Speaker-independent k-fold training. Speakers are split into k groups
// balanced by their segment counts; fold i tests group i, validates group
// (i+1) mod k, and trains on the rest. Every speaker is tested exactly once
// across the k folds. All randomness comes from substreams of the run seed,
// so reruns are bit-identical.

struct FoldSpec {
  int index = 0;
  std::vector<std::string> train_speakers;
  std::vector<std::string> val_speakers;
  std::vector<std::string> test_speakers;
  bool operator==(const FoldSpec&) const = default;
};

struct FoldPlan {
  int k = 0;
  std::vector<FoldSpec> folds;
  bool operator==(const FoldPlan&) const = default;
};

inline FoldPlan make_folds(const Corpus& corpus, int k, std::uint64_t seed) {
  if (k < 2) throw DataError("fold count must be at least 2");
  std::map<std::string, int> counts;
  for (const Dialogue& d : corpus.dialogues)
    for (const Segment& s : d.segments) counts[s.speaker_id] += 1;
  if (static_cast<int>(counts.size()) < k)
    throw DataError("need at least " + std::to_string(k) + " speakers, found " +
                    std::to_string(counts.size()));

  std::vector<std::string> speakers;
  for (const auto& [name, n] : counts) speakers.push_back(name);
  Rng rng = Rng::derive(seed, {rng_tag::kFolds});
  rng.shuffle(speakers);
  // Heaviest speakers placed first (stable: ties keep shuffled order), each
  // into the currently lightest group.
  std::stable_sort(speakers.begin(), speakers.end(),
                   [&](const std::string& a, const std::string& b) {
                     return counts.at(a) > counts.at(b);
                   });
  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(k));
  std::vector<long> load(static_cast<std::size_t>(k), 0);
  for (const std::string& s : speakers) {
    std::size_t lightest = 0;
    for (std::size_t g = 1; g < groups.size(); ++g)
      if (load[g] < load[lightest]) lightest = g;
    groups[lightest].push_back(s);
    load[lightest] += counts.at(s);
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());

  FoldPlan plan;
  plan.k = k;
  for (int i = 0; i < k; ++i) {
    FoldSpec f;
    f.index = i;
    f.test_speakers = groups[static_cast<std::size_t>(i)];
    f.val_speakers = groups[static_cast<std::size_t>((i + 1) % k)];
    for (int g = 0; g < k; ++g)
      if (g != i && g != (i + 1) % k)
        f.train_speakers.insert(f.train_speakers.end(),
                                groups[static_cast<std::size_t>(g)].begin(),
                                groups[static_cast<std::size_t>(g)].end());
    std::sort(f.train_speakers.begin(), f.train_speakers.end());
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 16;
  int max_epochs = 30;
  std::uint64_t seed = 0;
  bool operator==(const TrainConfig&) const = default;
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.learning_rate < 0.0) throw DataError("learning_rate must be >= 0");
  if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0)
    throw DataError("moment decay rates must lie in [0,1)");
  if (c.epsilon <= 0.0) throw DataError("epsilon must be > 0");
  if (c.batch_size < 1) throw DataError("batch_size must be >= 1");
  if (c.max_epochs < 1) throw DataError("max_epochs must be >= 1");
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"epsilon", c.epsilon},
          {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("epsilon").get_to(c.epsilon);
  j.at("batch_size").get_to(c.batch_size);
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("seed").get_to(c.seed);
  validate_train_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Adam optimizer over the parameter container
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Matrix*> tensor_ptrs(EncoderParams& p) {
  std::vector<Matrix*> v;
  p.for_each_named([&](const std::string&, Matrix& m) { v.push_back(&m); });
  return v;
}

inline std::vector<const Matrix*> tensor_ptrs(const EncoderParams& p) {
  std::vector<const Matrix*> v;
  p.for_each_named(
      [&](const std::string&, const Matrix& m) { v.push_back(&m); });
  return v;
}

}  // namespace detail

struct AdamState {
  EncoderParams m, v;
  long t = 0;
};

inline AdamState make_adam_state(const EncoderParams& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

inline void adam_step(EncoderParams& params, const EncoderParams& grads,
                      AdamState& state, const TrainConfig& tc) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(state.t));
  auto ps = detail::tensor_ptrs(params);
  auto gs = detail::tensor_ptrs(grads);
  auto ms = detail::tensor_ptrs(state.m);
  auto vs = detail::tensor_ptrs(state.v);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Matrix& p = *ps[i];
    const Matrix& g = *gs[i];
    Matrix& m = *ms[i];
    Matrix& v = *vs[i];
    m = tc.beta1 * m + (1.0 - tc.beta1) * g;
    v = tc.beta2 * v.array().matrix() +
        (1.0 - tc.beta2) * g.array().square().matrix();
    p.array() -= tc.learning_rate * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + tc.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Fold datasets
// ---------------------------------------------------------------------------

struct FoldData {
  std::vector<ModelSample> train, val, test;
};

namespace detail {

inline FoldData split_fold_samples(const Corpus& corpus,
                                   const ContextPolicy& policy,
                                   const EncoderConfig& model,
                                   const FoldSpec& fold) {
  const std::set<std::string> train_set(fold.train_speakers.begin(),
                                        fold.train_speakers.end());
  const std::set<std::string> val_set(fold.val_speakers.begin(),
                                      fold.val_speakers.end());
  const std::set<std::string> test_set(fold.test_speakers.begin(),
                                       fold.test_speakers.end());
  FoldData out;
  auto place = [&](ModelSample&& m, const std::string& speaker) {
    if (train_set.count(speaker)) out.train.push_back(std::move(m));
    else if (val_set.count(speaker)) out.val.push_back(std::move(m));
    else if (test_set.count(speaker)) out.test.push_back(std::move(m));
  };
  if (policy.modality == Modality::text) {
    const Vocabulary vocab = Vocabulary::from_corpus(corpus);
    if (model.vocab_size < vocab.size())
      throw DataError("model vocab_size " + std::to_string(model.vocab_size) +
                      " smaller than corpus vocabulary " +
                      std::to_string(vocab.size()));
    for (ContextualSample& s : build_dataset(corpus, policy)) {
      const std::string speaker = s.speaker_id;
      place(make_model_sample(vocab, s), speaker);
    }
  } else {
    for (AcousticContextualSample& s : build_acoustic_dataset(corpus, policy)) {
      const std::string speaker = s.speaker_id;
      place(make_model_sample(s), speaker);
    }
  }
  return out;
}

inline PredictionSet predict_set(const EncoderParams& params,
                                 const std::vector<ModelSample>& samples,
                                 int fold_index) {
  PredictionSet ps;
  ps.fold = fold_index;
  for (const ModelSample& s : samples)
    ps.by_segment[s.segment_id] = {static_cast<EmotionLabel>(s.label),
                                   static_cast<EmotionLabel>(predict(params, s))};
  return ps;
}

}  // namespace detail

// Fills modality-dependent blanks (vocab_size, d_feat) from the corpus so
// experiment configs can omit them.
inline EncoderConfig resolve_model_config(EncoderConfig model,
                                          const ContextPolicy& policy,
                                          const Corpus& corpus) {
  if (model.modality != policy.modality)
    throw DataError("model and context policy disagree on modality");
  if (model.modality == Modality::text) {
    if (model.vocab_size == 0)
      model.vocab_size = Vocabulary::from_corpus(corpus).size();
  } else {
    if (model.d_feat == 0) model.d_feat = corpus.d_feat;
    if (model.d_feat != corpus.d_feat)
      throw DataError("model d_feat " + std::to_string(model.d_feat) +
                      " does not match corpus d_feat " +
                      std::to_string(corpus.d_feat));
  }
  validate_config(model);
  return model;
}

// ---------------------------------------------------------------------------
// Single-fold training
// ---------------------------------------------------------------------------

struct EpochStats {
  double train_loss = 0.0;
  double val_ua = 0.0;
  bool operator==(const EpochStats&) const = default;
};

struct RunRecord {
  int fold = 0;
  std::vector<EpochStats> epochs;
  int selected_epoch = 0;  // 1-based; argmax val UA, earliest on ties
  EncoderParams params;    // best checkpoint
  std::string digest;
  PredictionSet test_predictions;
};

// Core loop starting from explicit initial parameters (used directly by the
// fine-tuning phases; train_fold wraps it with a fresh initialization).
inline RunRecord train_from_params(const Corpus& corpus, const FoldSpec& fold,
                                   const ContextPolicy& policy,
                                   EncoderParams params,
                                   const TrainConfig& tc) {
  validate_policy(policy);
  validate_train_config(tc);
  const FoldData data =
      detail::split_fold_samples(corpus, policy, params.config, fold);
  if (data.train.empty())
    throw DataError("fold " + std::to_string(fold.index) +
                    " has no training samples");
  if (data.val.empty())
    throw DataError("fold " + std::to_string(fold.index) +
                    " has no validation samples");
  if (data.test.empty())
    throw DataError("fold " + std::to_string(fold.index) +
                    " has no test samples");

  AdamState adam = make_adam_state(params);
  Rng dropout_rng =
      Rng::derive(tc.seed, {rng_tag::kDropout, static_cast<std::uint64_t>(fold.index)});

  RunRecord rec;
  rec.fold = fold.index;
  EncoderParams best = params;
  double best_ua = -1.0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng::derive(
        tc.seed, {rng_tag::kShuffle, static_cast<std::uint64_t>(fold.index),
                  static_cast<std::uint64_t>(epoch)});
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(tc.batch_size));
      std::vector<ModelSample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i)
        batch.push_back(data.train[order[i]]);
      auto [loss, grads] = loss_and_grad(params, batch, &dropout_rng);
      loss_sum += loss * static_cast<double>(batch.size());
      adam_step(params, grads, adam, tc);
    }

    EpochStats es;
    es.train_loss = loss_sum / static_cast<double>(data.train.size());
    // Lenient UA: small validation splits may miss a class entirely.
    es.val_ua = unweighted_accuracy_present(
        detail::predict_set(params, data.val, fold.index));
    rec.epochs.push_back(es);
    if (es.val_ua > best_ua) {
      best_ua = es.val_ua;
      best = params;
      rec.selected_epoch = epoch;
    }
  }
  rec.params = std::move(best);
  rec.digest = checkpoint_digest(rec.params);
  rec.test_predictions =
      detail::predict_set(rec.params, data.test, fold.index);
  return rec;
}

inline RunRecord train_fold(const Corpus& corpus, const FoldSpec& fold,
                            const ContextPolicy& policy,
                            const EncoderConfig& model, const TrainConfig& tc) {
  const EncoderConfig resolved = resolve_model_config(model, policy, corpus);
  Rng init_rng = Rng::derive(
      tc.seed, {rng_tag::kInit, static_cast<std::uint64_t>(fold.index)});
  return train_from_params(corpus, fold, policy,
                           init_params(resolved, init_rng), tc);
}

// All folds, optionally in parallel. Results are position-stable and
// independent of the job count.
inline std::vector<RunRecord> train_all_folds(const Corpus& corpus,
                                              const FoldPlan& plan,
                                              const ContextPolicy& policy,
                                              const EncoderConfig& model,
                                              const TrainConfig& tc,
                                              int jobs = 1) {
  if (jobs < 1) throw DataError("jobs must be >= 1");
  std::vector<RunRecord> out(plan.folds.size());
  std::vector<std::exception_ptr> errors(plan.folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.folds.size()) return;
      try {
        out[i] = train_fold(corpus, plan.folds[i], policy, model, tc);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads =
      std::min<int>(jobs, static_cast<int>(plan.folds.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Hierarchical two-phase fine-tuning
// ---------------------------------------------------------------------------

inline ContextPolicy without_context(ContextPolicy p) {
  p.direction = Direction::none;
  p.n_prev_tokens = 0;
  p.n_next_tokens = 0;
  return p;
}

struct HierarchicalResult {
  RunRecord phase1;
  RunRecord context;  // phase 2 with the context policy
  RunRecord control;  // phase 2 from the same checkpoint, context disabled
  std::vector<std::string> warm_started;  // tensor names copied from phase 1
};

// Phase 1 trains without context; phase 2 fine-tunes twice from that
// checkpoint: once with the context policy, once as a context-free control.
// Both phase-2 runs start from identical warm-started parameters (shared
// tensors copied by name and shape; new tensors freshly initialized from the
// fine-tune stream) and consume identical RNG substreams.
inline HierarchicalResult hierarchical_train(
    const Corpus& corpus, const FoldSpec& fold,
    const ContextPolicy& phase1_policy, const EncoderConfig& phase1_model,
    const TrainConfig& phase1_tc, const ContextPolicy& phase2_policy,
    const EncoderConfig& phase2_model, const TrainConfig& phase2_tc) {
  if (phase1_policy.direction != Direction::none)
    throw DataError("phase 1 must train without conversational context");
  HierarchicalResult result;
  result.phase1 =
      train_fold(corpus, fold, phase1_policy, phase1_model, phase1_tc);

  const EncoderConfig resolved =
      resolve_model_config(phase2_model, phase2_policy, corpus);
  Rng ft_rng = Rng::derive(phase2_tc.seed, {rng_tag::kFinetuneInit,
                                            static_cast<std::uint64_t>(fold.index)});
  EncoderParams warmed = init_params(resolved, ft_rng);
  result.warm_started = warm_start(warmed, result.phase1.params);

  result.context = train_from_params(corpus, fold, phase2_policy, warmed,
                                     phase2_tc);
  result.control = train_from_params(corpus, fold,
                                     without_context(phase2_policy), warmed,
                                     phase2_tc);
  return result;
}

// ---------------------------------------------------------------------------
// Token-window sweep
// ---------------------------------------------------------------------------

inline ContextPolicy token_window_policy(int n_prev, int n_next) {
  ContextPolicy p;
  p.scale = Scale::tokens;
  p.modality = Modality::text;
  p.speaker_scope = SpeakerScope::all;
  p.n_prev_tokens = n_prev;
  p.n_next_tokens = n_next;
  p.direction = n_prev == 0 && n_next == 0 ? Direction::none
                : n_prev > 0 && n_next > 0 ? Direction::both
                : n_prev > 0               ? Direction::previous
                                           : Direction::next;
  return p;
}

// Trains every fold for each (n_prev, n_next) window and reports the pooled
// UA. The (0,0) window is the no-context baseline and must be present.
inline std::vector<SweepRow> token_sweep(
    const Corpus& corpus, const FoldPlan& plan,
    const std::vector<std::pair<int, int>>& windows, const EncoderConfig& model,
    const TrainConfig& tc, int jobs = 1) {
  const bool has_baseline =
      std::any_of(windows.begin(), windows.end(),
                  [](const auto& w) { return w.first == 0 && w.second == 0; });
  if (!has_baseline)
    throw DataError("token sweep windows must include the (0,0) baseline");
  std::vector<SweepRow> rows;
  for (const auto& [n_prev, n_next] : windows) {
    const ContextPolicy policy = token_window_policy(n_prev, n_next);
    const auto records = train_all_folds(corpus, plan, policy, model, tc, jobs);
    std::vector<PredictionSet> preds;
    for (const RunRecord& r : records) preds.push_back(r.test_predictions);
    SweepRow row;
    row.n_prev = n_prev;
    row.n_next = n_next;
    row.ua = unweighted_accuracy(combine_folds(preds));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace erc
