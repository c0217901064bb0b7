#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "erc/corpus.hpp"
#include "erc/evaluation.hpp"
#include "erc/model.hpp"
#include "erc/synthgen.hpp"
#include "erc/training.hpp"
#include "erc/windowing.hpp"

namespace erc {

// An experiment is one JSON document: a data source (a corpus file or an
// inline generator spec, never both), a context policy, a model config, a
// train config, and the fold geometry. Run directories are named by a hash
// of the resolved config so identical experiments collide onto the same
// path, and are populated atomically (write to a temp dir, rename on
// success).

struct ExperimentConfig {
  std::string corpus_path;                // exactly one of these two...
  std::optional<GeneratorSpec> generator; // ...must be set
  int n_dialogues = 0;                    // generator mode only
  ContextPolicy policy;
  EncoderConfig model;
  TrainConfig train;
  int k_folds = 5;
  std::uint64_t seed = 0;
};

inline void validate_experiment(const ExperimentConfig& c) {
  const bool has_path = !c.corpus_path.empty();
  const bool has_spec = c.generator.has_value();
  if (has_path == has_spec)
    throw DataError(
        "experiment needs exactly one data source: corpus_path or generator");
  if (has_spec) {
    validate_spec(*c.generator);
    if (c.n_dialogues < 1)
      throw DataError("generator experiments need n_dialogues >= 1");
  }
  validate_policy(c.policy);
  if (c.model.modality != c.policy.modality)
    throw DataError("model and context policy disagree on modality");
  validate_train_config(c.train);
  if (c.k_folds < 2) throw DataError("k_folds must be at least 2");
}

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (!c.corpus_path.empty()) j["corpus_path"] = c.corpus_path;
  if (c.generator) {
    j["generator"] = spec_to_json(*c.generator);
    j["n_dialogues"] = c.n_dialogues;
  }
  j["policy"] = policy_to_json(c.policy);
  j["model"] = config_to_json(c.model);
  j["train"] = train_config_to_json(c.train);
  j["k_folds"] = c.k_folds;
  j["seed"] = c.seed;
  return j;
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("corpus_path")) j.at("corpus_path").get_to(c.corpus_path);
  if (j.contains("generator")) {
    c.generator = spec_from_json(j.at("generator"));
    if (j.contains("n_dialogues")) j.at("n_dialogues").get_to(c.n_dialogues);
  }
  c.policy = policy_from_json(j.at("policy"));
  // Model validation is deferred: vocab_size/d_feat may be corpus-resolved.
  const auto& jm = j.at("model");
  c.model.modality = modality_from_string(jm.at("modality").get<std::string>());
  jm.at("d_model").get_to(c.model.d_model);
  jm.at("n_layers").get_to(c.model.n_layers);
  jm.at("n_heads").get_to(c.model.n_heads);
  jm.at("d_ff").get_to(c.model.d_ff);
  jm.at("max_positions").get_to(c.model.max_positions);
  if (jm.contains("vocab_size")) jm.at("vocab_size").get_to(c.model.vocab_size);
  if (jm.contains("d_feat")) jm.at("d_feat").get_to(c.model.d_feat);
  jm.at("dropout_rate").get_to(c.model.dropout_rate);
  jm.at("d_ctx").get_to(c.model.d_ctx);
  if (jm.contains("n_classes")) jm.at("n_classes").get_to(c.model.n_classes);
  jm.at("mwce").get_to(c.model.mwce);
  jm.at("ccfte").get_to(c.model.ccfte);
  c.train = train_config_from_json(j.at("train"));
  j.at("k_folds").get_to(c.k_folds);
  j.at("seed").get_to(c.seed);
  validate_experiment(c);
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open experiment config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("bad experiment config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

// Content hash over the canonical (sorted-key, no-whitespace) JSON form.
inline std::string experiment_hash(const ExperimentConfig& c) {
  return hex64(fnv1a64(experiment_to_json(c).dump()));
}

// Output root: explicit argument > ERC_OUT_DIR environment variable > "runs".
inline std::filesystem::path output_root(const std::string& explicit_dir = "") {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("ERC_OUT_DIR"); env && *env)
    return env;
  return "runs";
}

// Loads or generates the experiment's corpus.
inline Corpus materialize_corpus(const ExperimentConfig& c) {
  if (c.generator) return generate(*c.generator, c.n_dialogues, c.seed);
  return load_corpus(c.corpus_path);
}

// ---------------------------------------------------------------------------
// Run directories: run-<kind>-<hash>, built under a temp name and renamed
// into place only once every file is written.
// ---------------------------------------------------------------------------

class RunDirectory {
 public:
  // Prepares <root>/.tmp-<kind>-<hash>; commit() renames it to the final
  // path. If the final path already exists it is replaced atomically-ish
  // (removed after the new content is fully staged).
  RunDirectory(const std::filesystem::path& root, const std::string& kind,
               const std::string& hash)
      : final_path_(root / ("run-" + kind + "-" + hash)),
        staging_path_(root / (".tmp-" + kind + "-" + hash)) {
    std::filesystem::remove_all(staging_path_);
    std::filesystem::create_directories(staging_path_);
  }
  ~RunDirectory() {
    if (!committed_) {
      std::error_code ec;
      std::filesystem::remove_all(staging_path_, ec);
    }
  }
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& staging() const { return staging_path_; }
  const std::filesystem::path& final_path() const { return final_path_; }

  void write_file(const std::string& name, const std::string& content) const {
    detail::write_file(staging_path_ / name, content);
  }

  std::filesystem::path commit() {
    std::filesystem::remove_all(final_path_);
    std::filesystem::rename(staging_path_, final_path_);
    committed_ = true;
    return final_path_;
  }

 private:
  std::filesystem::path final_path_;
  std::filesystem::path staging_path_;
  bool committed_ = false;
};

// ---------------------------------------------------------------------------
// Whole-experiment drivers (shared by the CLI's train/sweep/hier commands).
// Each returns the committed run directory.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string epochs_csv(const RunRecord& r) {
  std::string s = "epoch,train_loss,val_ua\n";
  for (std::size_t e = 0; e < r.epochs.size(); ++e)
    s += std::to_string(e + 1) + "," + format_fixed6(r.epochs[e].train_loss) +
         "," + format_fixed6(r.epochs[e].val_ua) + '\n';
  s += "selected," + std::to_string(r.selected_epoch) + ",\n";
  return s;
}

inline void write_fold_outputs(const RunDirectory& dir, const RunRecord& r,
                               const std::string& prefix) {
  dir.write_file(prefix + "-epochs.csv", epochs_csv(r));
  dir.write_file(prefix + "-predictions.csv", predictions_csv(r.test_predictions));
  save_checkpoint(r.params,
                  (dir.staging() / (prefix + "-checkpoint.bin")).string());
}

inline EvalReport combined_report(const std::vector<RunRecord>& records,
                                  const Corpus& corpus) {
  std::vector<PredictionSet> preds;
  for (const RunRecord& r : records) preds.push_back(r.test_predictions);
  return make_eval_report(combine_folds(preds), corpus);
}

}  // namespace detail

// Baseline/one-policy training across all folds.
inline std::filesystem::path run_train(const ExperimentConfig& config,
                                       const std::filesystem::path& root,
                                       int jobs = 1) {
  validate_experiment(config);
  const Corpus corpus = materialize_corpus(config);
  const FoldPlan plan = make_folds(corpus, config.k_folds, config.seed);
  const auto records = train_all_folds(corpus, plan, config.policy,
                                       config.model, config.train, jobs);
  RunDirectory dir(root, "train", experiment_hash(config));
  dir.write_file("config.json", experiment_to_json(config).dump(2) + "\n");
  for (const RunRecord& r : records)
    detail::write_fold_outputs(dir, r, "fold" + std::to_string(r.fold));
  const EvalReport report = detail::combined_report(records, corpus);
  dir.write_file("confusion.csv", confusion_csv(report));
  dir.write_file("per_class.csv", per_class_csv(report));
  dir.write_file("conditional.csv", conditional_csv(report));
  dir.write_file("summary.txt", summary_text(report));
  return dir.commit();
}

// Token-window sweep; windows come from the caller (CLI flag).
inline std::filesystem::path run_sweep(
    const ExperimentConfig& config,
    const std::vector<std::pair<int, int>>& windows,
    const std::filesystem::path& root, int jobs = 1) {
  validate_experiment(config);
  if (config.policy.scale != Scale::tokens ||
      config.policy.modality != Modality::text)
    throw DataError("sweeps require a token-scale text policy");
  const Corpus corpus = materialize_corpus(config);
  const FoldPlan plan = make_folds(corpus, config.k_folds, config.seed);
  const auto rows =
      token_sweep(corpus, plan, windows, config.model, config.train, jobs);
  nlohmann::json jc = experiment_to_json(config);
  nlohmann::json jw = nlohmann::json::array();
  for (const auto& [p, n] : windows) jw.push_back({p, n});
  jc["sweep_windows"] = jw;
  RunDirectory dir(root, "sweep", hex64(fnv1a64(jc.dump())));
  dir.write_file("config.json", jc.dump(2) + "\n");
  dir.write_file("sweep.csv", sweep_csv(rows));
  return dir.commit();
}

// Hierarchical two-phase experiment over all folds: phase-1 baseline, then
// context and control fine-tunes per fold, with combined reports for each.
inline std::filesystem::path run_hier(const ExperimentConfig& config,
                                      const std::filesystem::path& root,
                                      int jobs = 1) {
  validate_experiment(config);
  if (config.policy.direction == Direction::none)
    throw DataError("hierarchical runs need a context-enabled policy");
  const Corpus corpus = materialize_corpus(config);
  const FoldPlan plan = make_folds(corpus, config.k_folds, config.seed);

  ContextPolicy phase1_policy = without_context(config.policy);
  EncoderConfig phase1_model = config.model;
  phase1_model.ccfte = false;  // context machinery joins in phase 2

  std::vector<HierarchicalResult> results(plan.folds.size());
  std::vector<std::exception_ptr> errors(plan.folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.folds.size()) return;
      try {
        results[i] = hierarchical_train(corpus, plan.folds[i], phase1_policy,
                                        phase1_model, config.train,
                                        config.policy, config.model,
                                        config.train);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(std::max(jobs, 1),
                                      static_cast<int>(plan.folds.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  RunDirectory dir(root, "hier", experiment_hash(config));
  dir.write_file("config.json", experiment_to_json(config).dump(2) + "\n");
  std::string digests = "fold,phase1,context,control\n";
  std::vector<RunRecord> ctx_records, ctl_records;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& h = results[i];
    const std::string fp = "fold" + std::to_string(plan.folds[i].index);
    detail::write_fold_outputs(dir, h.phase1, fp + "-phase1");
    detail::write_fold_outputs(dir, h.context, fp + "-context");
    detail::write_fold_outputs(dir, h.control, fp + "-control");
    digests += std::to_string(plan.folds[i].index) + "," + h.phase1.digest +
               "," + h.context.digest + "," + h.control.digest + '\n';
    ctx_records.push_back(h.context);
    ctl_records.push_back(h.control);
  }
  dir.write_file("digests.csv", digests);
  const EvalReport ctx_report = detail::combined_report(ctx_records, corpus);
  const EvalReport ctl_report = detail::combined_report(ctl_records, corpus);
  dir.write_file("context-summary.txt", summary_text(ctx_report));
  dir.write_file("control-summary.txt", summary_text(ctl_report));
  dir.write_file("context-confusion.csv", confusion_csv(ctx_report));
  dir.write_file("control-confusion.csv", confusion_csv(ctl_report));
  dir.write_file("context-conditional.csv", conditional_csv(ctx_report));
  dir.write_file("control-conditional.csv", conditional_csv(ctl_report));
  return dir.commit();
}

}  // namespace erc
