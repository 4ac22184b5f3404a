#include "agcd/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

namespace agcd {

namespace {

using json = nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void put_novelty(json& j, const std::string& prefix, const std::optional<NoveltyReport>& n) {
  j[prefix + "nov_c"] = n ? json(n->nov_c) : json(nullptr);
  j[prefix + "nov_r"] = n ? json(n->nov_r) : json(nullptr);
  j[prefix + "nov_u"] = n ? json(n->nov_u) : json(nullptr);
  j[prefix + "nov_i"] = n ? json(n->nov_i) : json(nullptr);
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

IndexList sorted_union(const IndexList& a, const IndexList& b) {
  IndexList out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

void assert_disjoint_from_test(const PoolState& pool, const IndexList& test) {
  for (const IndexList* set : {&pool.labeled, &pool.unlabeled}) {
    IndexList overlap;
    std::set_intersection(set->begin(), set->end(), test.begin(), test.end(), std::back_inserter(overlap));
    if (!overlap.empty()) throw Error("test sample leaked into the training pools");
  }
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (rounds < 1) throw ConfigError("rounds must be at least 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must be in (0, 1]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
  if (source.feature_dir.empty() && !source.synthetic) {
    throw ConfigError("no data source: pass --features DIR or --synthetic spec");
  }
  if (estimate_range && estimate_range->min > estimate_range->max) {
    throw ConfigError("estimate range minimum exceeds maximum");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  // FNV-1a over the stream name, then mixed through seed_seq.
  std::uint64_t tag = 1469598103934665603ull;
  for (char c : stream) {
    tag ^= static_cast<unsigned char>(c);
    tag *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::pair<IndexList, IndexList> holdout_split(const FeatureDataset& dataset, double test_fraction,
                                              std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
  std::vector<IndexList> by_class(dataset.num_classes());
  for (Index i = 0; i < dataset.size(); ++i) by_class[dataset.labels()[i]].push_back(i);
  std::mt19937_64 rng(seed);
  IndexList train;
  IndexList test;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < 2) {
      throw DataError("class " + std::to_string(c) + " has fewer than 2 samples for a holdout split");
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(members.size()));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

FeatureDataset load_source(const DataSource& source, std::uint64_t seed) {
  if (!source.feature_dir.empty()) return load_feature_dir(source.feature_dir);
  if (!source.synthetic) throw ConfigError("no data source");
  SyntheticSpec spec = *source.synthetic;
  spec.seed = seed;
  return generate_synthetic(spec);
}

Experiment prepare_experiment(const RunConfig& cfg) {
  return prepare_experiment(cfg, load_source(cfg.source, derive_seed(cfg.seed, "data")));
}

Experiment prepare_experiment(const RunConfig& cfg, FeatureDataset dataset) {
  cfg.validate();
  Experiment exp;
  exp.dataset = std::move(dataset);
  std::tie(exp.train, exp.test) = holdout_split(exp.dataset, cfg.test_fraction, derive_seed(cfg.seed, "holdout"));
  SplitConfig split = cfg.split;
  if (split.old_class_count == 0) split.old_class_count = exp.dataset.num_old();
  if (split.old_class_count != exp.dataset.num_old()) {
    throw ConfigError("split old class count differs from the dataset's num_old");
  }
  split.seed = derive_seed(cfg.seed, "split");
  exp.pool = make_split(exp.dataset, split, exp.train);
  exp.model_classes = exp.dataset.num_classes();
  if (cfg.estimate_range) {
    const Matrix features = exp.dataset.rows(exp.train);
    IndexList rows;
    for (Index i : exp.pool.labeled) {
      rows.push_back(static_cast<Index>(std::lower_bound(exp.train.begin(), exp.train.end(), i) - exp.train.begin()));
    }
    exp.estimate = estimate_k(features, rows, exp.dataset.labels_of(exp.pool.labeled),
                              *cfg.estimate_range, derive_seed(cfg.seed, "estimate"));
    exp.model_classes = std::max(exp.estimate->k, exp.dataset.num_old() + 1);
  }
  return exp;
}

json RoundReport::to_json() const {
  json j;
  j["round"] = round;
  j["strategy"] = strategy;
  j["acc_all"] = accuracy.acc_all;
  j["acc_old"] = optional_number(accuracy.acc_old);
  j["acc_new"] = optional_number(accuracy.acc_new);
  if (transductive) {
    j["transductive_acc_all"] = transductive->acc_all;
    j["transductive_acc_old"] = optional_number(transductive->acc_old);
    j["transductive_acc_new"] = optional_number(transductive->acc_new);
  }
  put_novelty(j, "", novelty);
  put_novelty(j, "cum_", novelty_cumulative);
  j["mapping_diff"] = optional_number(mapping_diff);
  j["informative_phase"] = informative_phase;
  j["transfer"] = transfer;
  j["num_labeled"] = num_labeled;
  j["num_unlabeled"] = num_unlabeled;
  j["num_queried"] = num_queried;
  j["mapping"] = mapping ? json(mapping->map()) : json(nullptr);
  return j;
}

namespace {
constexpr std::array<const char*, 18> kCsvColumns = {
    "round", "strategy", "acc_all", "acc_old", "acc_new", "nov_c", "nov_r", "nov_u", "nov_i",
    "cum_nov_c", "cum_nov_r", "cum_nov_u", "cum_nov_i", "mapping_diff", "informative_phase",
    "transfer", "num_labeled", "num_queried"};
}

std::string csv_header() {
  std::string out;
  for (std::size_t i = 0; i < kCsvColumns.size(); ++i) out += (i ? "," : "") + std::string(kCsvColumns[i]);
  return out;
}

std::string to_csv_row(const RoundReport& report) {
  const json j = report.to_json();
  std::string out;
  for (std::size_t i = 0; i < kCsvColumns.size(); ++i) out += (i ? "," : "") + csv_cell(j.at(kCsvColumns[i]));
  return out;
}

AccuracyReport evaluate(const Model& model, const FeatureDataset& dataset, const IndexList& indices,
                        std::size_t mapping_classes) {
  const LabelList predictions = model.predict(dataset.rows(indices));
  return accuracy_breakdown(dataset.labels_of(indices), predictions, mapping_classes, dataset.num_old());
}

BaseResult run_base_training(const RunConfig& cfg, const Experiment& exp) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t proj_dim = cfg.train.proj_dim == 0 ? exp.dataset.dim() : cfg.train.proj_dim;
  Model model(exp.dataset.dim(), proj_dim, exp.model_classes, derive_seed(cfg.seed, "model"),
              cfg.train.temperatures);
  EmaModel ema(model, cfg.train.ema_decay);

  TrainData data;
  data.dataset = &exp.dataset;
  data.main = sorted_union(exp.pool.labeled, exp.pool.unlabeled);
  data.main_labeled = exp.pool.labeled;
  const LabelMapping identity = LabelMapping::identity(exp.mapping_classes());
  train_round(model, ema, data, cfg.train, cfg.train.epochs_base, 0,
              [&](const EmaModel&) { return identity; }, derive_seed(cfg.seed, "base"));

  BaseResult out{std::move(model), std::move(ema), {}, cfg.train.epochs_base};
  RoundReport& r = out.report;
  r.round = 0;
  r.strategy = std::string(strategy_name(cfg.strategy));
  r.accuracy = evaluate(out.model, exp.dataset, exp.test, exp.mapping_classes());
  if (cfg.transductive) r.transductive = evaluate(out.model, exp.dataset, exp.pool.unlabeled, exp.mapping_classes());
  r.transfer = cfg.informative_from_start;
  r.informative_phase = cfg.informative_from_start;
  r.num_labeled = exp.pool.labeled.size();
  r.num_unlabeled = exp.pool.unlabeled.size();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<RoundReport> run_agcd(const RunConfig& cfg, const Experiment& exp, BaseResult& state,
                                  const ReportSink& sink) {
  cfg.validate();
  const Oracle oracle(exp.dataset.labels());
  const std::size_t k_map = exp.mapping_classes();
  const std::size_t num_old = exp.dataset.num_old();
  PoolState pool = exp.pool;
  Model& model = state.model;
  EmaModel& ema = state.ema;
  std::size_t& schedule_epoch = state.schedule_epoch;
  bool transfer = cfg.informative_from_start;

  std::vector<RoundReport> reports;
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    check_pool(pool, exp.train);
    assert_disjoint_from_test(pool, exp.test);
    if (cfg.budget > pool.unlabeled.size()) throw ConfigError("budget exceeds pool");

    const Model scorer = cfg.score_with_ema ? ema.snapshot() : model;
    const StrategyContext ctx = make_context(scorer, exp.dataset, pool, cfg.budget, num_old,
                                             derive_seed(cfg.seed, "select", t), transfer, cfg.metric);
    const IndexList picks = select(cfg.strategy, ctx);
    pool = query_oracle(pool, oracle, picks);
    check_pool(pool, exp.train);

    const Matrix labeled_features = exp.dataset.rows(pool.labeled);
    const LabelList labeled_labels = exp.dataset.labels_of(pool.labeled);
    const MappingProvider provider = [&](const EmaModel& e) {
      return compute_mapping(e, labeled_features, labeled_labels, k_map);
    };
    TrainData data;
    data.dataset = &exp.dataset;
    data.main_labeled = pool.initial_labeled();
    data.main = sorted_union(data.main_labeled, pool.unlabeled);
    data.queried = pool.all_queried();
    TrainResult trained = train_round(model, ema, data, cfg.train, cfg.train.epochs_round, schedule_epoch,
                                      provider, derive_seed(cfg.seed, "round", t));
    schedule_epoch += cfg.train.epochs_round;
    if (trained.epoch_mappings.empty()) trained.epoch_mappings.push_back(provider(ema));

    RoundReport r;
    r.round = t;
    r.strategy = std::string(strategy_name(cfg.strategy));
    r.informative_phase = transfer;
    r.mapping_diff = mapping_diff(trained.initial_mapping(), trained.final_mapping());
    transfer = update_transfer(transfer, trained.initial_mapping(), trained.final_mapping(), cfg.delta);
    r.transfer = transfer;
    r.mapping = trained.final_mapping();
    r.accuracy = evaluate(model, exp.dataset, exp.test, k_map);
    if (cfg.transductive) r.transductive = evaluate(model, exp.dataset, pool.unlabeled, k_map);
    const IndexList& round_picks = pool.queried_per_round.back();
    if (!round_picks.empty()) {
      r.novelty = novelty_metrics(exp.dataset.labels_of(round_picks), num_old, exp.dataset.num_new());
    }
    const IndexList all_queried = pool.all_queried();
    if (!all_queried.empty()) {
      r.novelty_cumulative = novelty_metrics(exp.dataset.labels_of(all_queried), num_old, exp.dataset.num_new());
    }
    r.num_labeled = pool.labeled.size();
    r.num_unlabeled = pool.unlabeled.size();
    r.num_queried = all_queried.size();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (sink) sink(r);
    reports.push_back(std::move(r));
  }
  return reports;
}

json to_json(const RunConfig& cfg) {
  json j;
  if (!cfg.source.feature_dir.empty()) j["features"] = cfg.source.feature_dir.string();
  if (cfg.source.synthetic) {
    const auto& s = *cfg.source.synthetic;
    j["synthetic"] = {{"num_old", s.num_old}, {"num_new", s.num_new}, {"per_class", s.per_class},
                      {"dim", s.dim}, {"separation", s.separation}};
  }
  j["label_ratio"] = cfg.split.label_ratio;
  j["test_fraction"] = cfg.test_fraction;
  j["strategy"] = std::string(strategy_name(cfg.strategy));
  j["rounds"] = cfg.rounds;
  j["budget"] = cfg.budget;
  j["delta"] = cfg.delta;
  j["seed"] = cfg.seed;
  j["metric"] = std::string(uncertainty_metric_name(cfg.metric));
  j["informative_from_start"] = cfg.informative_from_start;
  j["score_with_ema"] = cfg.score_with_ema;
  if (cfg.estimate_range) j["estimate_k"] = {cfg.estimate_range->min, cfg.estimate_range->max};
  const TrainConfig& t = cfg.train;
  j["train"] = {{"lambda", t.lambda}, {"lambda_e", t.lambda_e}, {"learning_rate", t.learning_rate},
                {"momentum", t.momentum}, {"ema_decay", t.ema_decay}, {"view_noise", t.view_noise},
                {"epochs_base", t.epochs_base}, {"epochs_round", t.epochs_round},
                {"batch_main", t.batch_main}, {"batch_queried", t.batch_queried},
                {"tau_c", t.temperatures.contrastive}, {"tau_p", t.temperatures.classifier},
                {"teacher_start", t.temperatures.teacher_start}, {"teacher_end", t.temperatures.teacher_end},
                {"teacher_warmup_epochs", t.temperatures.teacher_warmup_epochs}};
  return j;
}

std::vector<RoundReport> run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const Experiment exp = prepare_experiment(cfg);
  const bool persist = !cfg.out_dir.empty();
  std::ofstream jsonl;
  std::ofstream csv;
  std::ofstream timing;
  if (persist) {
    std::filesystem::create_directories(cfg.out_dir);
    json config = to_json(cfg);
    if (exp.estimate) {
      config["estimated_k"] = exp.estimate->k;
      config["estimate_accuracy"] = exp.estimate->accuracy;
    }
    std::ofstream(cfg.out_dir / "config.json") << config.dump(2) << "\n";
    jsonl.open(cfg.out_dir / "rounds.jsonl", std::ios::trunc);
    csv.open(cfg.out_dir / "rounds.csv", std::ios::trunc);
    timing.open(cfg.out_dir / "timing.jsonl", std::ios::trunc);
    if (!jsonl || !csv || !timing) throw Error("cannot write logs under " + cfg.out_dir.string());
    csv << csv_header() << "\n";
  }
  auto emit = [&](const RoundReport& r) {
    if (!persist) return;
    jsonl << r.to_json().dump() << "\n" << std::flush;
    csv << to_csv_row(r) << "\n" << std::flush;
    timing << json{{"round", r.round}, {"seconds", r.seconds}}.dump() << "\n" << std::flush;
  };

  BaseResult base = run_base_training(cfg, exp);
  if (persist) save_checkpoint(base.model, base.ema, cfg.out_dir / "base.ckpt", base.schedule_epoch);
  std::vector<RoundReport> reports{base.report};
  emit(base.report);
  const std::vector<RoundReport> rounds = run_agcd(cfg, exp, base, emit);
  if (persist) save_checkpoint(base.model, base.ema, cfg.out_dir / "final.ckpt", base.schedule_epoch);
  reports.insert(reports.end(), rounds.begin(), rounds.end());
  return reports;
}

}  // namespace agcd
