#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "agcd/estimation.hpp"
#include "agcd/pipeline.hpp"

using json = nlohmann::json;

namespace {

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;

struct SourceFlags {
  std::string features;
  std::string synthetic;

  void attach(CLI::App* cmd) {
    auto* f = cmd->add_option("--features", features, "feature directory (meta.json, features.bin, labels.bin)");
    auto* s = cmd->add_option("--synthetic", synthetic, "K_OLD,K_NEW,PER_CLASS,DIM,SEP");
    f->excludes(s);
  }

  agcd::DataSource resolve() const {
    agcd::DataSource src;
    if (!features.empty()) src.feature_dir = features;
    if (!synthetic.empty()) src.synthetic = agcd::parse_synthetic_spec(synthetic);
    if (src.feature_dir.empty() && !src.synthetic) throw agcd::ConfigError("one of --features or --synthetic is required");
    return src;
  }
};

std::string fmt(const std::optional<double>& v) {
  if (!v) return "    -";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

void print_round(const agcd::RoundReport& r) {
  std::cout << "round " << r.round << "  acc_all " << fmt(r.accuracy.acc_all) << "  acc_old "
            << fmt(r.accuracy.acc_old) << "  acc_new " << fmt(r.accuracy.acc_new);
  if (r.novelty) std::cout << "  nov_i " << fmt(r.novelty->nov_i);
  if (r.mapping_diff) std::cout << "  diff " << fmt(r.mapping_diff);
  std::cout << "  transfer " << (r.transfer ? 1 : 0) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active generalized category discovery on fixed embeddings"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic feature directory");
  std::string synth_spec = "5,5,200,32,5";
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--synthetic", synth_spec, "K_OLD,K_NEW,PER_CLASS,DIM,SEP")->capture_default_str();
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out)->required();

  // run
  auto* run = app.add_subcommand("run", "base training followed by active rounds");
  SourceFlags run_src;
  run_src.attach(run);
  agcd::RunConfig cfg;
  std::string strategy = "adaptive-novel";
  std::string metric = "margin";
  std::string run_out;
  std::string run_range;
  run->add_option("--label-ratio", cfg.split.label_ratio)->capture_default_str();
  run->add_option("--rounds", cfg.rounds)->capture_default_str();
  run->add_option("--budget", cfg.budget)->capture_default_str();
  run->add_option("--strategy", strategy)
      ->check(CLI::IsMember({"random", "entropy", "leastconf", "margin", "kmeans", "coreset", "badge", "adaptive-novel"}))
      ->capture_default_str();
  run->add_option("--delta", cfg.delta)->capture_default_str();
  run->add_option("--seed", cfg.seed);
  run->add_option("--out", run_out);
  run->add_option("--estimate-k", run_range, "estimate K from MIN:MAX instead of using the true count");
  run->add_option("--epochs-round", cfg.train.epochs_round)->capture_default_str();
  run->add_option("--epochs-base", cfg.train.epochs_base)->capture_default_str();
  run->add_option("--lambda", cfg.train.lambda)->capture_default_str();
  run->add_option("--lr", cfg.train.learning_rate)->capture_default_str();
  run->add_option("--test-fraction", cfg.test_fraction)->capture_default_str();
  run->add_option("--metric", metric, "Adaptive-Novel confidence: margin|msp|entropy")->capture_default_str();
  run->add_flag("--informative-start", cfg.informative_from_start, "start Adaptive-Novel in the informative phase");
  run->add_flag("--score-ema", cfg.score_with_ema, "score the pool with the EMA model");
  run->add_flag("--transductive", cfg.transductive, "also report accuracy on the unlabeled pool");

  // estimate-k
  auto* est = app.add_subcommand("estimate-k", "Max-ACC estimate of the total class count");
  SourceFlags est_src;
  est_src.attach(est);
  std::string est_range;
  double est_ratio = 0.2;
  std::uint64_t est_seed = 0;
  std::size_t est_restarts = 3;
  est->add_option("--range", est_range, "MIN:MAX")->required();
  est->add_option("--label-ratio", est_ratio)->capture_default_str();
  est->add_option("--restarts", est_restarts)->capture_default_str();
  est->add_option("--seed", est_seed);

  // eval
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a held-out split");
  SourceFlags eval_src;
  eval_src.attach(eval);
  std::string eval_ckpt;
  std::uint64_t eval_seed = 0;
  double eval_fraction = 0.2;
  bool eval_all = false;
  std::size_t eval_bins = 0;
  std::string eval_measure = "margin";
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--seed", eval_seed, "seed of the run that produced the checkpoint");
  eval->add_option("--test-fraction", eval_fraction)->capture_default_str();
  eval->add_flag("--all", eval_all, "score every sample instead of the held-out split");
  eval->add_option("--histogram", eval_bins, "also emit old/new confidence histograms with this many bins");
  eval->add_option("--measure", eval_measure, "histogram measure: neg-entropy|margin|msp")
      ->check(CLI::IsMember({"neg-entropy", "margin", "msp"}));

  // report
  auto* report = app.add_subcommand("report", "summarize a run directory");
  std::string report_dir;
  report->add_option("--out", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigExit;
  }

  try {
    if (*synth) {
      agcd::SyntheticSpec spec = agcd::parse_synthetic_spec(synth_spec);
      spec.seed = synth_seed;
      const agcd::FeatureDataset ds = agcd::generate_synthetic(spec);
      agcd::save_feature_dir(ds, synth_out);
      std::cout << "wrote " << ds.size() << " samples x " << ds.dim() << " to " << synth_out << "\n";
    } else if (*run) {
      cfg.source = run_src.resolve();
      cfg.strategy = agcd::parse_strategy(strategy);
      cfg.metric = agcd::parse_uncertainty_metric(metric);
      cfg.out_dir = run_out;
      if (!run_range.empty()) cfg.estimate_range = agcd::parse_k_range(run_range);
      for (const auto& r : agcd::run_experiment(cfg)) print_round(r);
    } else if (*est) {
      agcd::RunConfig ecfg;
      ecfg.source = est_src.resolve();
      ecfg.seed = est_seed;
      ecfg.split.label_ratio = est_ratio;
      ecfg.estimate_range = agcd::parse_k_range(est_range);
      // prepare_experiment runs the estimate on the training split.
      const agcd::Experiment exp = agcd::prepare_experiment(ecfg);
      json out;
      out["k"] = exp.estimate->k;
      out["range"] = {exp.estimate->range.min, exp.estimate->range.max};
      out["accuracy"] = exp.estimate->accuracy;
      out["true_k"] = exp.dataset.num_classes();
      std::cout << out.dump(2) << "\n";
    } else if (*eval) {
      agcd::RunConfig ecfg;
      ecfg.source = eval_src.resolve();
      ecfg.seed = eval_seed;
      ecfg.test_fraction = eval_fraction;
      const agcd::FeatureDataset ds = agcd::load_source(ecfg.source, agcd::derive_seed(eval_seed, "data"));
      agcd::IndexList idx;
      if (eval_all) {
        for (agcd::Index i = 0; i < ds.size(); ++i) idx.push_back(i);
      } else {
        idx = agcd::holdout_split(ds, eval_fraction, agcd::derive_seed(eval_seed, "holdout")).second;
      }
      const agcd::Model model = agcd::load_checkpoint(eval_ckpt);
      if (model.dim() != ds.dim()) throw agcd::DataError("checkpoint dimension does not match the features");
      const std::size_t k = std::max(model.num_classes(), ds.num_classes());
      json out = agcd::to_json(agcd::evaluate(model, ds, idx, k));
      out["num_samples"] = idx.size();
      if (eval_bins > 0) {
        const auto measure = eval_measure == "msp"   ? agcd::ConfidenceMeasure::kMsp
                             : eval_measure == "margin" ? agcd::ConfidenceMeasure::kMargin
                                                        : agcd::ConfidenceMeasure::kNegEntropy;
        const agcd::Matrix p = model.posteriors(ds.rows(idx));
        const auto h = agcd::confidence_histogram(p, ds.labels_of(idx), ds.num_old(), measure, eval_bins);
        out["histogram"] = {{"measure", eval_measure}, {"lower", h.lower}, {"upper", h.upper},
                            {"old", h.old_mass}, {"new", h.new_mass}};
      }
      std::cout << out.dump(2) << "\n";
    } else if (*report) {
      std::ifstream in(std::filesystem::path(report_dir) / "rounds.jsonl");
      if (!in) throw agcd::DataError("no rounds.jsonl in " + report_dir);
      std::string first;
      while (first.empty() && std::getline(in, first)) {
      }
      if (first.empty()) throw agcd::DataError("empty rounds.jsonl in " + report_dir);
      std::printf("strategy: %s\n", json::parse(first).value("strategy", std::string("?")).c_str());
      in.clear();
      in.seekg(0);
      std::printf("%5s %8s %8s %8s %7s %7s %7s %6s %8s\n", "round", "acc_all", "acc_old", "acc_new", "nov_c",
                  "nov_r", "nov_i", "diff", "transfer");
      std::string line;
      auto cell = [](const json& v) { return v.is_null() ? std::string("-") : fmt(v.get<double>()); };
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json r = json::parse(line);
        std::printf("%5zu %8s %8s %8s %7s %7s %7s %6s %8d\n", r.at("round").get<std::size_t>(),
                    cell(r.at("acc_all")).c_str(), cell(r.at("acc_old")).c_str(), cell(r.at("acc_new")).c_str(),
                    cell(r.at("nov_c")).c_str(), cell(r.at("nov_r")).c_str(), cell(r.at("nov_i")).c_str(),
                    cell(r.at("mapping_diff")).c_str(), r.at("transfer").get<bool>() ? 1 : 0);
      }
    }
  } catch (const agcd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const agcd::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
