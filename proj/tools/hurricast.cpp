// hurricast command-line front end.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hurricast/config.hpp"
#include "hurricast/cube_store.hpp"
#include "hurricast/errors.hpp"
#include "hurricast/eval.hpp"
#include "hurricast/forecast_io.hpp"
#include "hurricast/pipeline.hpp"
#include "hurricast/storm_data.hpp"
#include "hurricast/synthetic.hpp"
#include "hurricast/tensor.hpp"

namespace fs = std::filesystem;
using namespace hurricast;

namespace {

/// Exclusive lock next to an output path; removed on scope exit.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& target) {
    path_ = target;
    path_ += ".lock";
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw std::runtime_error("output " + target.string() + " is locked by another run (" + path_.string() + ")");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  RunConfig load() const {
    RunConfig c = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    if (seed) c.set_seed(*seed);
    c.apply_environment();
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "random seed (HURICAST_SEED overrides)");
}

std::vector<std::string> provenance(const std::string& command, const RunConfig& c) {
  return {"generated-by=hurricast " + command, "seed=" + std::to_string(c.seed()), "config-hash=" + c.hash()};
}

std::vector<storm::ForecastCase> select_split(std::vector<storm::ForecastCase> cases, const std::string& split) {
  if (split == "all") return cases;
  storm::Provenance want;
  if (split == "train") want = storm::Provenance::Train;
  else if (split == "validation") want = storm::Provenance::Validation;
  else if (split == "test") want = storm::Provenance::Test;
  else throw ConfigError("unknown split '" + split + "' (admissible: train, validation, test, all)");
  std::vector<storm::ForecastCase> out;
  for (auto& c : cases) {
    if (c.provenance == want) out.push_back(std::move(c));
  }
  if (out.empty()) throw ConfigError("no " + split + " cases in the case store");
  return out;
}

std::optional<CubeStore> load_cubes(const std::string& dir) {
  if (dir.empty()) return std::nullopt;
  return CubeStore::load_directory(dir);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string out;
  std::optional<int> storms, steps;
  std::optional<std::string> placement;
  std::optional<double> noise_sd;
};

int run_synth(const SynthArgs& a) {
  RunConfig c = a.common.load();
  if (a.storms) c.synth.storms = *a.storms;
  if (a.steps) c.synth.steps = *a.steps;
  if (a.placement) c.synth.placement = synthetic::parse_placement(*a.placement);
  if (a.noise_sd) c.synth.noise_sd = *a.noise_sd;
  OutputLock lock(a.out);
  const auto data = synthetic::generate(c.synth);
  synthetic::write(data, c.synth, a.out);
  c.tracks = fs::path(a.out) / "tracks.csv";
  c.cubes = fs::path(a.out) / "cubes";
  c.operational = fs::path(a.out) / "operational.csv";
  c.save(fs::path(a.out) / "config.txt");
  std::cout << "wrote " << data.tracks.size() << " storms, " << data.cubes.slice_count() << " cube slices and "
            << data.operational.size() << " operational forecasts to " << a.out << "\n"
            << "intensity noise floor " << data.intensity_noise_floor << " kt\n";
  return 0;
}

struct IngestArgs {
  Common common;
  std::string tracks, cubes, out;
  bool raw_position = false;
};

int run_ingest(const IngestArgs& a) {
  RunConfig c = a.common.load();
  if (a.raw_position) c.pipeline.include_raw_position = true;
  OutputLock lock(a.out);
  const auto parsed = storm::parse_track_csv(a.tracks);
  for (const auto& d : parsed.rejected) std::cerr << a.tracks << ":" << d.line << ": " << d.message << "\n";
  std::vector<storm::StormTrack> prepared;
  for (const auto& t : parsed.tracks) prepared.push_back(storm::to_one_minute_winds(storm::interpolate_to_3h(t)));
  const auto selected = storm::select_storms(prepared);
  const auto cubes = load_cubes(a.cubes);
  const storm::FeatureLayout layout(c.pipeline.include_raw_position);
  storm::BuildStats stats;
  std::vector<storm::ForecastCase> cases;
  for (const auto& t : selected) {
    auto built = storm::build_cases(t, cubes ? &*cubes : nullptr, stats, layout);
    std::move(built.begin(), built.end(), std::back_inserter(cases));
  }
  auto split = storm::split_by_year(std::move(cases), c.split);
  std::vector<storm::ForecastCase> all;
  for (auto* part : {&split.train, &split.validation, &split.test}) {
    std::move(part->begin(), part->end(), std::back_inserter(all));
  }
  fs::create_directories(a.out);
  storm::save_cases(fs::path(a.out) / "cases.hcas", all, layout);
  std::ostringstream summary;
  summary << "storms_parsed=" << parsed.tracks.size() << "\n"
          << "rows_rejected=" << parsed.rejected.size() << "\n"
          << "storms_selected=" << selected.size() << "\n"
          << "cases_train=" << split.train.size() << "\n"
          << "cases_validation=" << split.validation.size() << "\n"
          << "cases_test=" << split.test.size() << "\n"
          << "cases_excluded=" << split.excluded.size() << "\n"
          << "skipped_missing_cube=" << stats.skipped_missing_cube << "\n"
          << "skipped_missing_value=" << stats.skipped_missing_value << "\n";
  write_text(fs::path(a.out) / "ingest_summary.txt", summary.str());
  c.tracks = a.tracks;
  c.cubes = a.cubes;
  c.save(fs::path(a.out) / "config.txt");
  std::cout << summary.str();
  return 0;
}

struct TrainArgs {
  Common common;
  std::string cases, cubes, out;
  std::optional<int> variant, max_epochs;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  RunConfig c = a.common.load();
  if (a.variant) c.pipeline.variant = *a.variant;
  if (a.max_epochs) {
    c.pipeline.intensity_train.max_epochs = *a.max_epochs;
    c.pipeline.track_train.max_epochs = *a.max_epochs;
  }
  storm::FeatureLayout layout;
  auto cases = storm::load_cases(a.cases, &layout);
  c.pipeline.include_raw_position = layout.include_raw_position();
  auto train = select_split(cases, "train");
  auto val = select_split(std::move(cases), "validation");
  const auto cubes = load_cubes(a.cubes);
  OutputLock lock(a.out);
  auto bundle = pipeline::train_variant(train, val, cubes ? &*cubes : nullptr, c.pipeline, a.quiet ? nullptr : &std::cerr);
  bundle.config["config-hash"] = c.hash();
  pipeline::save_bundle(bundle, a.out);
  std::cout << "trained " << pipeline::model_name(bundle.variant) << " on " << train.size() << " cases\n";
  for (const auto& [k, v] : bundle.validation_scores) std::cout << k << "=" << v << "\n";
  return 0;
}

struct PredictArgs {
  Common common;
  std::string bundle, cases, cubes, out, split = "test", cache;
};

int run_predict(const PredictArgs& a) {
  RunConfig c = a.common.load();
  const auto bundle = pipeline::load_bundle(a.bundle);
  const auto cases = select_split(storm::load_cases(a.cases), a.split);
  const auto cubes = load_cubes(a.cubes);
  std::optional<pipeline::EmbeddingCache> cache;
  if (!a.cache.empty()) cache.emplace(a.cache);
  OutputLock lock(a.out);
  const auto preds =
      pipeline::predict_cases(bundle, cases, cubes ? &*cubes : nullptr, {}, cache ? &*cache : nullptr);
  write_forecast_csv(a.out, preds, provenance("predict", c));
  std::cout << "wrote " << preds.size() << " forecasts to " << a.out << "\n";
  return 0;
}

int run_extract(const PredictArgs& a) {
  RunConfig c = a.common.load();
  const auto bundle = pipeline::load_bundle(a.bundle);
  if (bundle.embedding_size() == 0) throw ConfigError("variant 1 has no extractor");
  const auto cases = select_split(storm::load_cases(a.cases), a.split);
  const auto cubes = load_cubes(a.cubes);
  std::optional<pipeline::EmbeddingCache> cache;
  if (!a.cache.empty()) cache.emplace(a.cache);
  OutputLock lock(a.out);
  const auto emb = pipeline::compute_embeddings(bundle, cases, cubes ? &*cubes : nullptr, cache ? &*cache : nullptr);
  std::ofstream f(a.out);
  if (!f) throw std::runtime_error("cannot write " + a.out);
  for (const auto& line : provenance("extract", c)) f << "# " << line << "\n";
  f << "sid,iso_t0,task";
  for (int i = 0; i < bundle.embedding_size(); ++i) f << ",e" << i;
  f << "\n";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (int task = 0; task < 2; ++task) {
      f << cases[i].storm_id << "," << format_iso8601(cases[i].t0) << "," << (task ? "track" : "intensity");
      for (double v : task ? emb[i].track : emb[i].intensity) f << "," << format_exact(v);
      f << "\n";
    }
  }
  std::cout << "wrote " << cases.size() << " embeddings of length " << bundle.embedding_size() << " to " << a.out
            << "\n";
  return 0;
}

struct EnsembleArgs {
  Common common;
  std::string bundles, cases, cubes, operational, out;
};

int run_ensemble(const EnsembleArgs& a) {
  RunConfig c = a.common.load();
  std::vector<pipeline::ModelBundle> bundles;
  for (const auto& p : split_list(a.bundles)) bundles.push_back(pipeline::load_bundle(p));
  if (bundles.empty()) throw ConfigError("--bundles lists no files");
  auto cases = storm::load_cases(a.cases);
  const auto val = select_split(cases, "validation");
  const auto test = select_split(cases, "test");
  const auto cubes = load_cubes(a.cubes);
  const CubeStore* cp = cubes ? &*cubes : nullptr;
  OutputLock lock(a.out);
  fs::create_directories(a.out);

  std::vector<std::string> names;
  std::vector<std::vector<ForecastRecord>> val_f, test_f;
  for (const auto& b : bundles) {
    names.push_back(pipeline::model_name(b.variant));
    val_f.push_back(pipeline::predict_cases(b, val, cp));
    test_f.push_back(pipeline::predict_cases(b, test, cp));
    write_forecast_csv(fs::path(a.out) / (names.back() + ".csv"), test_f.back(), provenance("ensemble", c));
  }
  const auto run = pipeline::train_huml_ensemble(names, val_f, test_f, val, test, c.ensemble_folds);
  write_forecast_csv(fs::path(a.out) / "HUML-5.csv", run.test_forecasts, provenance("ensemble", c));
  std::ostringstream w;
  const char* targets[] = {"intensity", "dlat", "dlon"};
  for (int k = 0; k < 3; ++k) {
    const auto& m = run.ensemble.models[static_cast<std::size_t>(k)];
    const auto& cfg = run.ensemble.chosen[static_cast<std::size_t>(k)];
    w << targets[k] << ".alpha=" << format_exact(cfg.alpha) << "\n"
      << targets[k] << ".l1_ratio=" << format_exact(cfg.l1_ratio) << "\n"
      << targets[k] << ".intercept=" << format_exact(m.intercept) << "\n";
    for (std::size_t j = 0; j < names.size(); ++j) {
      w << targets[k] << ".weight." << names[j] << "=" << format_exact(m.coef[static_cast<Eigen::Index>(j)]) << "\n";
    }
  }
  write_text(fs::path(a.out) / "ensemble_weights.txt", w.str());

  if (!a.operational.empty()) {
    std::size_t v4 = names.size();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (bundles[i].variant == 4) v4 = i;
    }
    if (v4 == names.size()) throw ConfigError("variant 6 needs a variant-4 bundle among --bundles");
    const auto ops = read_operational_csv(a.operational);
    std::set<std::string> wanted;
    for (const auto& t : test) wanted.insert(t.id());
    std::vector<ForecastRecord> ops_test;
    std::map<std::string, std::vector<ForecastRecord>> by_model;
    for (const auto& o : ops) {
      if (!wanted.count(o.case_id())) continue;
      ops_test.push_back(o);
      by_model[o.model_id].push_back(o);
    }
    const auto v6 = pipeline::operational_average(test_f[v4], ops_test);
    write_forecast_csv(fs::path(a.out) / "HUML-6.csv", v6, provenance("ensemble", c));
    for (const auto& [model, recs] : by_model) {
      write_forecast_csv(fs::path(a.out) / (model + ".csv"), recs, provenance("ensemble", c));
    }
    // Consensus of the operational members alone, for comparison.
    std::map<std::string, std::vector<ForecastRecord>> per_case;
    for (const auto& o : ops_test) per_case[o.case_id()].push_back(o);
    std::vector<ForecastRecord> op_avg;
    for (const auto& t : test) {
      auto it = per_case.find(t.id());
      if (it == per_case.end()) throw ConfigError("no operational forecast for case " + t.id());
      op_avg.push_back(ensemble::simple_average(it->second, "OP-average"));
    }
    write_forecast_csv(fs::path(a.out) / "OP-average.csv", op_avg, provenance("ensemble", c));
  }
  std::cout << "ensemble of " << names.size() << " members fitted on " << val.size() << " validation cases; "
            << test.size() << " test forecasts written to " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  Common common;
  std::string fixtures, cases, forecasts, baseline, out, split = "test";
};

int run_evaluate(const EvaluateArgs& a) {
  if (!a.fixtures.empty()) {
    const auto rows = eval::load_fixture(a.fixtures);
    const auto checks = eval::reproduce_skills(rows);
    int failed = 0;
    for (const auto& ch : checks) {
      std::printf("table %s %-9s %-3s %-36s mae %8.2f base %8.2f skill %8.3f reported %6.1f  %s\n",
                  ch.row.table.c_str(), ch.row.task == eval::Task::Track ? "track" : "intensity",
                  ch.row.basin.c_str(), ch.row.model.c_str(), ch.row.mae, ch.baseline_mae, ch.computed,
                  ch.row.reported_skill, ch.pass ? "ok" : "MISMATCH");
      if (!ch.pass) ++failed;
    }
    std::printf("%zu skill entries checked, %d mismatched\n", checks.size(), failed);
    return failed ? 1 : 0;
  }
  if (a.cases.empty() || a.forecasts.empty()) throw ConfigError("evaluate needs --fixtures or --cases with --forecasts");
  RunConfig c = a.common.load();
  const auto cases = select_split(storm::load_cases(a.cases), a.split);
  std::vector<std::vector<ForecastRecord>> members;
  std::vector<std::string> names;
  for (const auto& p : split_list(a.forecasts)) {
    auto recs = read_forecast_csv(p);
    names.push_back(recs.empty() ? fs::path(p).stem().string() : recs.front().model_id);
    members.push_back(std::move(recs));
  }
  const auto aligned = pipeline::align_forecasts(members, cases);
  std::string baseline = a.baseline.empty() ? names.front() : a.baseline;
  const auto bit = std::find(names.begin(), names.end(), baseline);
  if (bit == names.end()) throw ConfigError("baseline '" + baseline + "' is not among the forecasts");
  const auto baseline_index = bit - names.begin();

  // Per basin, plus all cases together.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    groups["ALL"].push_back(i);
    groups[std::string(storm::label(cases[i].basin))].push_back(i);
  }
  std::ostringstream csv, text;
  for (const bool track : {true, false}) {
    std::vector<eval::EvalReport> reports;
    for (const auto& [basin, idx] : groups) {
      std::vector<storm::ForecastCase> sub;
      for (auto i : idx) sub.push_back(cases[i]);
      if (sub.size() < 2) continue;
      auto pick = [&](std::size_t m) {
        std::vector<ForecastRecord> f;
        for (auto i : idx) f.push_back(aligned[m][i]);
        return f;
      };
      const auto base = pick(static_cast<std::size_t>(baseline_index));
      for (std::size_t m = 0; m < names.size(); ++m) {
        const auto f = pick(m);
        reports.push_back(track ? eval::evaluate_track(f, sub, names[m], basin, base, baseline)
                                : eval::evaluate_intensity(f, sub, names[m], basin, base, baseline));
      }
    }
    const auto table = eval::build_comparison_table(reports, baseline);
    csv << "# task=" << (track ? "track_km" : "intensity_kt") << "\n" << table.to_csv();
    text << (track ? "Track (km)" : "Intensity (kt)") << ", baseline " << baseline << "\n" << table.to_text() << "\n";
  }
  std::cout << text.str();
  if (!a.out.empty()) {
    OutputLock lock(a.out);
    std::ostringstream full;
    for (const auto& line : provenance("evaluate", c)) full << "# " << line << "\n";
    full << csv.str();
    write_text(a.out, full.str());
  }
  return 0;
}

struct DecomposeArgs {
  std::string cube;
  std::vector<int> ranks{3, 5, 3, 3};
  int top = 5;
};

int run_decompose(const DecomposeArgs& a) {
  const Tensor4d t = read_hcub(a.cube).cast<double>();
  if (a.ranks.size() != 4) throw ConfigError("--ranks needs four values");
  TuckerRanks r;
  for (int i = 0; i < 4; ++i) r[static_cast<std::size_t>(i)] = a.ranks[static_cast<std::size_t>(i)];
  const auto f = tucker(t, r);
  const auto rec = reconstruct(f);
  std::printf("dims %ld x %ld x %ld x %ld, ranks %ld x %ld x %ld x %ld (%ld core entries)\n", static_cast<long>(t.dim(0)),
              static_cast<long>(t.dim(1)), static_cast<long>(t.dim(2)), static_cast<long>(t.dim(3)),
              static_cast<long>(r[0]), static_cast<long>(r[1]), static_cast<long>(r[2]), static_cast<long>(r[3]),
              static_cast<long>(f.core.size()));
  std::printf("tensor norm %.6g, core norm %.6g, relative reconstruction error %.6g\n", t.norm(), f.core.norm(),
              (t - rec).norm() / t.norm());
  for (int n = 1; n <= 4; ++n) {
    const auto b = mode_basis(t, n);
    std::printf("mode %d singular values:", n);
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(b.singular_values.size(), 6); ++i) {
      std::printf(" %.4g", b.singular_values[i]);
    }
    std::printf("\n");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(f.core.size()));
  for (Eigen::Index i = 0; i < f.core.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](auto x, auto y) { return std::abs(f.core.data()[x]) > std::abs(f.core.data()[y]); });
  const auto& d = f.core.dims();
  for (int k = 0; k < a.top && k < static_cast<int>(order.size()); ++k) {
    const Eigen::Index i = order[static_cast<std::size_t>(k)];
    std::printf("core(%ld,%ld,%ld,%ld) = %.6g\n", static_cast<long>(i / (d[1] * d[2] * d[3])),
                static_cast<long>(i / (d[2] * d[3]) % d[1]), static_cast<long>(i / d[3] % d[2]),
                static_cast<long>(i % d[3]), f.core.data()[i]);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tropical-cyclone intensity and track forecasting"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a planted-signal synthetic dataset");
  add_common(c_synth, synth.common);
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--storms", synth.storms, "number of storms");
  c_synth->add_option("--steps", synth.steps, "3-hourly records per storm");
  c_synth->add_option("--placement", synth.placement, "statistical | vision | both");
  c_synth->add_option("--noise-sd", synth.noise_sd, "intensity noise sd (kt)");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "build the case store from a track CSV");
  add_common(c_ingest, ingest.common);
  c_ingest->add_option("--tracks", ingest.tracks, "track CSV")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--cubes", ingest.cubes, "directory of HCUB files")->check(CLI::ExistingDirectory);
  c_ingest->add_option("--out", ingest.out, "output directory")->required();
  c_ingest->add_flag("--raw-position", ingest.raw_position, "append raw lat/lon columns");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train one model variant (1-4)");
  add_common(c_train, train.common);
  c_train->add_option("--cases", train.cases, "case store")->required()->check(CLI::ExistingFile);
  c_train->add_option("--cubes", train.cubes, "directory of HCUB files")->check(CLI::ExistingDirectory);
  c_train->add_option("--variant", train.variant, "variant id 1-4");
  c_train->add_option("--max-epochs", train.max_epochs, "neural training epochs");
  c_train->add_option("--out", train.out, "bundle path")->required();
  c_train->add_flag("--quiet", train.quiet, "no training log");

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "forecast cases with a trained bundle");
  add_common(c_predict, predict.common);
  c_predict->add_option("--bundle", predict.bundle, "bundle path")->required();
  c_predict->add_option("--cases", predict.cases, "case store")->required()->check(CLI::ExistingFile);
  c_predict->add_option("--cubes", predict.cubes, "directory of HCUB files")->check(CLI::ExistingDirectory);
  c_predict->add_option("--split", predict.split, "train | validation | test | all");
  c_predict->add_option("--cache", predict.cache, "embedding cache directory");
  c_predict->add_option("--out", predict.out, "forecast CSV")->required();

  PredictArgs extract;
  auto* c_extract = app.add_subcommand("extract", "dump extractor embeddings");
  add_common(c_extract, extract.common);
  c_extract->add_option("--bundle", extract.bundle, "bundle path")->required();
  c_extract->add_option("--cases", extract.cases, "case store")->required()->check(CLI::ExistingFile);
  c_extract->add_option("--cubes", extract.cubes, "directory of HCUB files")->check(CLI::ExistingDirectory);
  c_extract->add_option("--split", extract.split, "train | validation | test | all");
  c_extract->add_option("--cache", extract.cache, "embedding cache directory");
  c_extract->add_option("--out", extract.out, "embedding CSV")->required();

  EnsembleArgs ens;
  auto* c_ens = app.add_subcommand("ensemble", "stack base variants and build consensus forecasts");
  add_common(c_ens, ens.common);
  c_ens->add_option("--bundles", ens.bundles, "comma-separated bundle paths")->required();
  c_ens->add_option("--cases", ens.cases, "case store")->required()->check(CLI::ExistingFile);
  c_ens->add_option("--cubes", ens.cubes, "directory of HCUB files")->check(CLI::ExistingDirectory);
  c_ens->add_option("--operational", ens.operational, "operational forecast CSV")->check(CLI::ExistingFile);
  c_ens->add_option("--out", ens.out, "output directory")->required();

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "verification tables");
  add_common(c_eval, evaluate.common);
  c_eval->add_option("--fixtures", evaluate.fixtures, "published-table fixture CSV")->check(CLI::ExistingFile);
  c_eval->add_option("--cases", evaluate.cases, "case store")->check(CLI::ExistingFile);
  c_eval->add_option("--forecasts", evaluate.forecasts, "comma-separated forecast CSVs");
  c_eval->add_option("--baseline", evaluate.baseline, "baseline model id (default: first)");
  c_eval->add_option("--split", evaluate.split, "train | validation | test | all");
  c_eval->add_option("--out", evaluate.out, "table CSV");

  DecomposeArgs decompose;
  auto* c_dec = app.add_subcommand("decompose", "Tucker-decompose one cube file");
  c_dec->add_option("--cube", decompose.cube, "HCUB file")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--ranks", decompose.ranks, "four ranks")->delimiter(',')->expected(4);
  c_dec->add_option("--top", decompose.top, "core entries to list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_ingest->parsed()) return run_ingest(ingest);
    if (c_train->parsed()) return run_train(train);
    if (c_predict->parsed()) return run_predict(predict);
    if (c_extract->parsed()) return run_extract(extract);
    if (c_ens->parsed()) return run_ensemble(ens);
    if (c_eval->parsed()) return run_evaluate(evaluate);
    if (c_dec->parsed()) return run_decompose(decompose);
  } catch (const std::exception& e) {
    std::cerr << "hurricast: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
