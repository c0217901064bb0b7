// Command-line entry point for the conversational-context emotion
// classification toolkit: synthetic corpus generation with Bayes oracles,
// corpus analytics, fold training, token-window sweeps, hierarchical
// fine-tuning, and report generation.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 training divergence.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "erc/corpus.hpp"
#include "erc/evaluation.hpp"
#include "erc/experiment.hpp"
#include "erc/synthgen.hpp"
#include "erc/training.hpp"

namespace {

namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw erc::DataError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// --- synth -----------------------------------------------------------------

void cmd_synth(const std::string& spec_path, int n_dialogues,
               std::uint64_t seed, const std::string& out,
               std::int64_t oracle_samples) {
  erc::GeneratorSpec spec;
  if (spec_path.empty()) {
    spec = erc::default_generator_spec();
  } else {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(spec_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw erc::DataError("bad generator spec " + spec_path + ": " + e.what());
    }
    spec = erc::spec_from_json(j);
  }
  if (n_dialogues < 0) throw erc::UsageError("--n must be >= 0");
  if (n_dialogues == 0)
    std::cerr << "warning: generating an empty corpus (--n 0)\n";

  const erc::Corpus corpus = erc::generate(spec, n_dialogues, seed);
  erc::save_corpus(corpus, out);

  erc::detail::write_file(out + ".spec.json",
                          erc::spec_to_json(spec).dump(2) + "\n");

  nlohmann::json oracle;
  oracle["content"] = erc::oracle_to_json(
      erc::bayes_optimal_ua(spec, true, oracle_samples, seed));
  if (spec.emits_frames())
    oracle["frame"] =
        erc::oracle_to_json(erc::bayes_frame_ua(spec, oracle_samples, seed));
  erc::detail::write_file(out + ".oracle.json", oracle.dump(2) + "\n");

  std::cout << "wrote " << corpus.dialogues.size() << " dialogues to " << out
            << "\n";
}

// --- analytics ------------------------------------------------------------

std::string stats_csv(const erc::CorpusStats& st) {
  std::string s =
      "class,segments,speakers,dialogues,total_duration_min,mean_duration_s,"
      "vocab_size,avg_word_count\n";
  auto row = [](const std::string& name, const erc::ClassStats& c) {
    return name + "," + std::to_string(c.segments) + "," +
           std::to_string(c.speakers) + "," + std::to_string(c.dialogues) +
           "," + erc::format_fixed6(c.total_duration_min) + "," +
           erc::format_fixed6(c.mean_duration_s) + "," +
           std::to_string(c.vocab_size) + "," +
           erc::format_fixed6(c.avg_word_count) + "\n";
  };
  for (int c = 0; c < erc::kNumClasses; ++c)
    s += row(std::string(erc::kLabelNames[c]), st.per_class[c]);
  s += row("ALL", st.total);
  return s;
}

std::string transitions_csv(const erc::TransitionMatrix& t) {
  std::string s = "from,ANG,FEA,NEU,POS,row_total,included\n";
  for (int r = 0; r < erc::kNumClasses; ++r) {
    s += erc::kLabelNames[r];
    for (int c = 0; c < erc::kNumClasses; ++c)
      s += "," + erc::format_fixed6(t.probabilities[r][c]);
    s += "," + std::to_string(t.row_sum(r)) + "," +
         (t.row_included[r] ? "yes" : "no") + "\n";
  }
  return s;
}

std::string gaps_csv(const erc::GapHistogram& g) {
  std::string s = "bin_lower_s,bin_upper_s,count\n";
  for (const auto& [lo, n] : g.bins)
    s += erc::format_fixed6(lo) + "," + erc::format_fixed6(lo + g.bin_width_s) +
         "," + std::to_string(n) + "\n";
  return s;
}

std::string gaps_summary(const erc::GapHistogram& g) {
  return "direction: " +
         std::string(g.direction == erc::GapDirection::previous_to_target
                         ? "previous"
                         : "next") +
         "\nbin_width_s: " + erc::format_fixed6(g.bin_width_s) +
         "\nbinned_gaps: " + std::to_string(g.binned_total()) +
         "\ncontiguous_or_overlapping: " + std::to_string(g.n_contiguous) +
         "\nno_neighbor: " + std::to_string(g.n_missing) + "\n";
}

void cmd_stats(const std::string& corpus_path, const std::string& out_dir) {
  const erc::Corpus corpus = erc::load_corpus(corpus_path);
  fs::create_directories(out_dir);
  erc::detail::write_file(fs::path(out_dir) / "stats.csv",
                          stats_csv(erc::corpus_stats(corpus)));
  std::cout << "wrote " << (fs::path(out_dir) / "stats.csv").string() << "\n";
}

void cmd_transitions(const std::string& corpus_path, const std::string& out_dir,
                     std::int64_t min_count) {
  const erc::Corpus corpus = erc::load_corpus(corpus_path);
  fs::create_directories(out_dir);
  erc::detail::write_file(
      fs::path(out_dir) / "transitions.csv",
      transitions_csv(erc::transition_matrix(corpus, min_count)));
  std::cout << "wrote " << (fs::path(out_dir) / "transitions.csv").string()
            << "\n";
}

void cmd_gaps(const std::string& corpus_path, const std::string& out_dir,
              double bin_width, const std::string& direction) {
  erc::GapDirection dir;
  if (direction == "previous")
    dir = erc::GapDirection::previous_to_target;
  else if (direction == "next")
    dir = erc::GapDirection::target_to_next;
  else
    throw erc::UsageError("--direction must be 'previous' or 'next'");
  const erc::Corpus corpus = erc::load_corpus(corpus_path);
  const erc::GapHistogram g = erc::gap_histogram(corpus, dir, bin_width);
  fs::create_directories(out_dir);
  erc::detail::write_file(fs::path(out_dir) / "gaps.csv", gaps_csv(g));
  erc::detail::write_file(fs::path(out_dir) / "gaps.txt", gaps_summary(g));
  std::cout << "wrote " << (fs::path(out_dir) / "gaps.csv").string() << "\n";
}

// --- experiments ------------------------------------------------------------

std::vector<std::pair<int, int>> parse_windows(const std::string& text) {
  std::vector<std::pair<int, int>> windows;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    const auto colon = item.find(':');
    if (item.empty() || colon == std::string::npos)
      throw erc::UsageError("bad --windows entry '" + item +
                            "' (expected n_prev:n_next)");
    try {
      windows.emplace_back(std::stoi(item.substr(0, colon)),
                           std::stoi(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw erc::UsageError("bad --windows entry '" + item + "'");
    }
    pos = comma + 1;
  }
  if (windows.empty()) throw erc::UsageError("--windows is empty");
  return windows;
}

void cmd_train(const std::string& config_path, const std::string& out,
               int jobs) {
  const auto config = erc::load_experiment(config_path);
  const auto dir = erc::run_train(config, erc::output_root(out), jobs);
  std::cout << dir.string() << "\n";
}

void cmd_sweep(const std::string& config_path, const std::string& windows,
               const std::string& out, int jobs) {
  const auto config = erc::load_experiment(config_path);
  const auto dir = erc::run_sweep(config, parse_windows(windows),
                                  erc::output_root(out), jobs);
  std::cout << dir.string() << "\n";
}

void cmd_hier(const std::string& config_path, const std::string& out,
              int jobs) {
  const auto config = erc::load_experiment(config_path);
  const auto dir = erc::run_hier(config, erc::output_root(out), jobs);
  std::cout << dir.string() << "\n";
}

// --- evaluation -------------------------------------------------------------

void cmd_eval(const std::string& corpus_path, const std::string& pred_path,
              const std::string& out_dir) {
  const erc::Corpus corpus = erc::load_corpus(corpus_path);
  const erc::PredictionSet preds =
      erc::parse_predictions_csv(read_text_file(pred_path));
  const erc::EvalReport report = erc::make_eval_report(preds, corpus);
  erc::write_report(report, out_dir);
  std::cout << erc::summary_text(report);
}

void cmd_report(const std::string& run_dir, const std::string& out_dir) {
  const fs::path run(run_dir);
  const auto config = erc::load_experiment((run / "config.json").string());
  const erc::Corpus corpus = erc::materialize_corpus(config);
  std::vector<erc::PredictionSet> folds;
  for (int f = 0; f < config.k_folds; ++f) {
    const fs::path p = run / ("fold" + std::to_string(f) + "-predictions.csv");
    if (!fs::exists(p)) continue;
    folds.push_back(erc::parse_predictions_csv(read_text_file(p.string())));
  }
  if (folds.empty())
    throw erc::DataError("no fold predictions found in " + run_dir);
  const erc::EvalReport report =
      erc::make_eval_report(erc::combine_folds(folds), corpus);
  erc::write_report(report, out_dir.empty() ? run : fs::path(out_dir));
  std::cout << erc::summary_text(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "erc: conversational-context emotion classification experiments"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic dialogue corpus with Bayes oracles");
  std::string synth_spec, synth_out;
  int synth_n = 0;
  std::uint64_t synth_seed = 0;
  std::int64_t synth_oracle_samples = 20000;
  synth->add_option("--spec", synth_spec,
                    "Generator spec JSON (omit for the built-in default)");
  synth->add_option("--n", synth_n, "Number of dialogues")->required();
  synth->add_option("--seed", synth_seed, "Generation seed");
  synth->add_option("--out", synth_out, "Output corpus path (JSONL)")
      ->required();
  synth->add_option("--oracle-samples", synth_oracle_samples,
                    "Monte Carlo sample count for oracle estimates");

  // analytics
  auto* stats = app.add_subcommand("stats", "Per-class corpus statistics");
  std::string stats_corpus, stats_out;
  stats->add_option("--corpus", stats_corpus, "Corpus JSONL")->required();
  stats->add_option("--out", stats_out, "Output directory")->required();

  auto* transitions = app.add_subcommand(
      "transitions", "Empirical emotion transition matrix");
  std::string trans_corpus, trans_out;
  std::int64_t trans_min_count = 0;
  transitions->add_option("--corpus", trans_corpus, "Corpus JSONL")->required();
  transitions->add_option("--out", trans_out, "Output directory")->required();
  transitions->add_option("--min-count", trans_min_count,
                          "Minimum row transitions for probabilities");

  auto* gaps = app.add_subcommand("gaps", "Inter-segment gap histogram");
  std::string gaps_corpus, gaps_out, gaps_direction = "previous";
  double gaps_width = 1.0;
  gaps->add_option("--corpus", gaps_corpus, "Corpus JSONL")->required();
  gaps->add_option("--out", gaps_out, "Output directory")->required();
  gaps->add_option("--bin-width", gaps_width, "Histogram bin width (seconds)");
  gaps->add_option("--direction", gaps_direction, "previous|next");

  // experiments
  auto* train = app.add_subcommand("train", "Train all folds for one policy");
  std::string train_config, train_out;
  int train_jobs = 1;
  train->add_option("--config", train_config, "Experiment config JSON")
      ->required();
  train->add_option("--out", train_out,
                    "Output root (default $ERC_OUT_DIR or ./runs)");
  train->add_option("--jobs", train_jobs, "Parallel folds");

  auto* sweep = app.add_subcommand("sweep", "Token-window sweep");
  std::string sweep_config, sweep_windows, sweep_out;
  int sweep_jobs = 1;
  sweep->add_option("--config", sweep_config, "Experiment config JSON")
      ->required();
  sweep->add_option("--windows", sweep_windows,
                    "Comma-separated n_prev:n_next list, e.g. 0:0,10:0,50:0")
      ->required();
  sweep->add_option("--out", sweep_out,
                    "Output root (default $ERC_OUT_DIR or ./runs)");
  sweep->add_option("--jobs", sweep_jobs, "Parallel folds");

  auto* hier = app.add_subcommand(
      "hier", "Hierarchical two-phase fine-tune with control");
  std::string hier_config, hier_out;
  int hier_jobs = 1;
  hier->add_option("--config", hier_config, "Experiment config JSON")
      ->required();
  hier->add_option("--out", hier_out,
                   "Output root (default $ERC_OUT_DIR or ./runs)");
  hier->add_option("--jobs", hier_jobs, "Parallel folds");

  // evaluation
  auto* eval = app.add_subcommand("eval", "Evaluate a predictions CSV");
  std::string eval_corpus, eval_preds, eval_out;
  eval->add_option("--corpus", eval_corpus, "Corpus JSONL")->required();
  eval->add_option("--predictions", eval_preds, "Predictions CSV")->required();
  eval->add_option("--out", eval_out, "Report directory")->required();

  auto* report = app.add_subcommand(
      "report", "Recompute the combined report for a run directory");
  std::string report_run, report_out;
  report->add_option("--run", report_run, "Run directory")->required();
  report->add_option("--out", report_out,
                     "Report directory (default: the run directory)");

  try {
    app.parse(argc, argv);
    if (*synth)
      cmd_synth(synth_spec, synth_n, synth_seed, synth_out,
                synth_oracle_samples);
    else if (*stats)
      cmd_stats(stats_corpus, stats_out);
    else if (*transitions)
      cmd_transitions(trans_corpus, trans_out, trans_min_count);
    else if (*gaps)
      cmd_gaps(gaps_corpus, gaps_out, gaps_width, gaps_direction);
    else if (*train)
      cmd_train(train_config, train_out, train_jobs);
    else if (*sweep)
      cmd_sweep(sweep_config, sweep_windows, sweep_out, sweep_jobs);
    else if (*hier)
      cmd_hier(hier_config, hier_out, hier_jobs);
    else if (*eval)
      cmd_eval(eval_corpus, eval_preds, eval_out);
    else if (*report)
      cmd_report(report_run, report_out);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const erc::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const erc::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const erc::ParseError& e) {
    std::cerr << "parse error (line " << e.line() << "): " << e.what() << "\n";
    return 2;
  } catch (const erc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
