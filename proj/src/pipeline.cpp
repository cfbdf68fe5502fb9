#include "hurricast/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

#include "hurricast/errors.hpp"
#include "hurricast/eval.hpp"
#include "hurricast/io.hpp"
#include "hurricast/nn/checkpoint.hpp"

namespace hurricast::pipeline {

namespace {

constexpr std::array<HumlVariant, 6> kVariants = {{
    {1, "HUML-(stat, xgb)", false, Extractor::None},
    {2, "HUML-(stat/viz, xgb/td)", true, Extractor::Tucker},
    {3, "HUML-(stat/viz, xgb/cnn/gru)", true, Extractor::CnnGru},
    {4, "HUML-(stat/viz, xgb/cnn/transfo)", true, Extractor::CnnTransformer},
    {5, "HUML-ensemble", true, Extractor::Ensemble},
    {6, "HUML/OP-average", true, Extractor::OperationalAverage},
}};

constexpr int kNetBatch = 64;

bool neural(int variant_id) { return variant_id == 3 || variant_id == 4; }

nn::NetConfig task_net_config(const PipelineConfig& config, int outputs, std::uint64_t salt, int stat_dim) {
  nn::NetConfig n = config.net;
  n.decoder = config.variant == 3 ? nn::DecoderKind::Gru : nn::DecoderKind::Transformer;
  n.outputs = outputs;
  n.stat_dim = stat_dim;
  n.steps = storm::kHistorySteps;
  n.seed = config.seed * 1000003ULL + salt;
  return n;
}

Eigen::MatrixXd scaled_history(const ModelBundle& b, const storm::ForecastCase& c) {
  if (c.history_stat.rows() != storm::kHistorySteps || c.history_stat.cols() != b.stat_dim()) {
    throw DimensionError("case " + c.id() + " has a " + std::to_string(c.history_stat.rows()) + "x" +
                         std::to_string(c.history_stat.cols()) + " history, bundle expects " +
                         std::to_string(storm::kHistorySteps) + "x" + std::to_string(b.stat_dim()));
  }
  return b.scaler.apply(c.history_stat);
}

Tensor4f case_window(const ModelBundle& b, const storm::ForecastCase& c, const CubeStore* cubes) {
  if (!cubes) throw ConfigError("variant " + std::to_string(b.variant) + " needs reanalysis cubes");
  Tensor4f w;
  try {
    w = cubes->window(c.storm_id, c.t0, storm::kHistorySteps);
  } catch (const std::out_of_range& e) {
    throw std::out_of_range("case " + c.id() + ": " + e.what());
  }
  return standardize_channels(w, *b.channel_stats);
}

nn::SequenceDataset make_dataset(const ModelBundle& b, std::span<const storm::ForecastCase> cases,
                                 const CubeStore* cubes, int outputs) {
  nn::SequenceDataset d;
  d.stat.reserve(cases.size());
  d.targets = Eigen::MatrixXf::Zero(outputs, static_cast<Eigen::Index>(cases.size()));
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    d.stat.push_back(scaled_history(b, c).cast<float>());
    const auto col = static_cast<Eigen::Index>(i);
    if (outputs == 1) {
      d.targets(0, col) = static_cast<float>(c.target_intensity);
    } else {
      d.targets(0, col) = static_cast<float>(c.target_dlat);
      d.targets(1, col) = static_cast<float>(c.target_dlon);
    }
  }
  d.window = [&b, cases, cubes](std::size_t i) { return case_window(b, cases[i], cubes); };
  return d;
}

void audit(std::span<const storm::ForecastCase> cases, storm::Provenance expected, const char* which) {
  if (cases.empty()) throw DimensionError(std::string("train_variant: empty ") + which + " set");
  for (const auto& c : cases) {
    if (c.provenance != expected) {
      throw ConfigError(std::string("train_variant: case ") + c.id() + " in the " + which + " set is tagged '" +
                        std::string(storm::label(c.provenance)) + "'");
    }
  }
}

const GbtTriple& triple_for(const ModelBundle& b, const storm::ForecastCase& c) {
  auto it = b.gbts.find(std::string(storm::label(c.basin)));
  if (it == b.gbts.end()) it = b.gbts.find("ALL");
  if (it == b.gbts.end()) throw ConfigError("bundle has no tree models for basin " + std::string(storm::label(c.basin)));
  return it->second;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view label(Extractor e) {
  switch (e) {
    case Extractor::None: return "none";
    case Extractor::Tucker: return "tucker";
    case Extractor::CnnGru: return "cnn-gru";
    case Extractor::CnnTransformer: return "cnn-transformer";
    case Extractor::Ensemble: return "ensemble";
    case Extractor::OperationalAverage: return "huml/op-average";
  }
  return "?";
}

const HumlVariant& variant(int id) {
  if (id < 1 || id > 6) throw ConfigError("variant must be in 1..6, got " + std::to_string(id));
  return kVariants[static_cast<std::size_t>(id - 1)];
}

int embedding_length(int variant_id, const nn::NetConfig& net) {
  switch (variant(variant_id).extractor) {
    case Extractor::None: return 0;
    case Extractor::Tucker: return static_cast<int>(kVisionFeatureCount);
    case Extractor::CnnGru: return net.head2;
    case Extractor::CnnTransformer: return net.model_dim;
    default: throw ConfigError("variant " + std::to_string(variant_id) + " has no single extractor");
  }
}

std::string model_name(int variant_id) { return "HUML-" + std::to_string(variant(variant_id).id); }

void PipelineConfig::validate() const {
  if (variant < 1 || variant > 4) {
    throw ConfigError("train_variant handles variants 1-4; got " + std::to_string(variant));
  }
  gbt.validate();
  gbt.check_tuning_ranges();
  if (neural(variant)) {
    intensity_train.validate();
    track_train.validate();
  }
}

int ModelBundle::embedding_size() const {
  switch (variant) {
    case 1: return 0;
    case 2: return static_cast<int>(kVisionFeatureCount);
    default:
      if (!intensity_net) throw StateError("bundle for variant " + std::to_string(variant) + " lacks its network");
      return intensity_net->config().embedding_size();
  }
}

std::uint64_t ModelBundle::extractor_hash() const {
  if (variant == 1) return 0;
  io::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(variant));
  if (channel_stats) {
    for (double v : channel_stats->mean) w.f64(v);
    for (double v : channel_stats->stddev) w.f64(v);
  }
  for (const auto* net : {intensity_net.get(), track_net.get()}) {
    if (!net) continue;
    const auto blocks = nn::to_blocks<float>(net->params());
    w.bytes(nn::encode_checkpoint(blocks));
  }
  return io::fnv1a(w.buffer());
}

std::uint64_t layout_hash(const storm::FeatureLayout& layout, int variant_id, int embedding) {
  std::string s;
  for (const auto& n : layout.names()) s += n + ",";
  s += "|v" + std::to_string(variant_id) + "|e" + std::to_string(embedding);
  return io::fnv1a(s);
}

Eigen::VectorXd assemble_input(const ModelBundle& bundle, const storm::ForecastCase& c,
                               const Eigen::VectorXd& embedding) {
  if (embedding.size() != bundle.embedding_size()) {
    throw DimensionError("variant " + std::to_string(bundle.variant) + " expects a " +
                      std::to_string(bundle.embedding_size()) + "-long embedding, got " +
                      std::to_string(embedding.size()));
  }
  const Eigen::MatrixXd h = scaled_history(bundle, c);
  const Eigen::Index s = h.cols();
  Eigen::VectorXd x(storm::kHistorySteps * s + embedding.size());
  for (int k = 0; k < storm::kHistorySteps; ++k) x.segment(k * s, s) = h.row(k).transpose();
  x.tail(embedding.size()) = embedding;
  return x;
}

// ---------------------------------------------------------------------------
// Embedding cache

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

EmbeddingCache::~EmbeddingCache() {
  try {
    flush();
  } catch (...) {
  }
}

std::filesystem::path EmbeddingCache::file(std::uint64_t extractor) const { return dir_ / (hex(extractor) + ".hemb"); }

void EmbeddingCache::load(std::uint64_t extractor) const {
  if (entries_.count(extractor)) return;
  auto& m = entries_[extractor];
  const auto path = file(extractor);
  if (!std::filesystem::exists(path)) return;
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (r.raw(4) != "HEMB") throw FormatError(path.string() + ": not an embedding cache");
  const auto count = r.u32();
  auto vec = [&r] {
    Eigen::VectorXd v(r.u32());
    for (auto& x : v) x = r.f64();
    return v;
  };
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.str();
    CaseEmbedding e;
    e.intensity = vec();
    e.track = vec();
    m.emplace(std::move(id), std::move(e));
  }
}

std::optional<CaseEmbedding> EmbeddingCache::get(std::uint64_t extractor, const std::string& case_id) const {
  load(extractor);
  const auto& m = entries_[extractor];
  auto it = m.find(case_id);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(std::uint64_t extractor, const std::string& case_id, const CaseEmbedding& e) {
  load(extractor);
  entries_[extractor][case_id] = e;
  dirty_[extractor] = true;
}

void EmbeddingCache::flush() {
  for (auto& [extractor, dirty] : dirty_) {
    if (!dirty) continue;
    io::ByteWriter w;
    w.raw("HEMB");
    const auto& m = entries_[extractor];
    w.u32(static_cast<std::uint32_t>(m.size()));
    for (const auto& [id, e] : m) {
      w.str(id);
      for (const auto* v : {&e.intensity, &e.track}) {
        w.u32(static_cast<std::uint32_t>(v->size()));
        for (double x : *v) w.f64(x);
      }
    }
    io::write_file(file(extractor), w.buffer());
    dirty = false;
  }
}

// ---------------------------------------------------------------------------

std::vector<CaseEmbedding> compute_embeddings(const ModelBundle& bundle, std::span<const storm::ForecastCase> cases,
                                              const CubeStore* cubes, EmbeddingCache* cache) {
  std::vector<CaseEmbedding> out(cases.size());
  if (bundle.variant == 1) return out;
  const std::uint64_t key = cache ? bundle.extractor_hash() : 0;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (cache) {
      if (auto hit = cache->get(key, cases[i].id())) {
        out[i] = std::move(*hit);
        continue;
      }
    }
    todo.push_back(i);
  }
  if (todo.empty()) return out;

  std::vector<storm::ForecastCase> pending;
  pending.reserve(todo.size());
  for (auto i : todo) pending.push_back(cases[i]);

  if (bundle.variant == 2) {
    for (std::size_t j = 0; j < pending.size(); ++j) {
      const Eigen::VectorXd f = extract_vision_features(case_window(bundle, pending[j], cubes));
      out[todo[j]] = {f, f};
    }
  } else {
    const auto ds_int = make_dataset(bundle, pending, cubes, 1);
    const auto ds_trk = make_dataset(bundle, pending, cubes, 2);
    const Eigen::MatrixXd ei = nn::extract_embeddings(*bundle.intensity_net, ds_int, kNetBatch).cast<double>();
    const Eigen::MatrixXd et = nn::extract_embeddings(*bundle.track_net, ds_trk, kNetBatch).cast<double>();
    for (std::size_t j = 0; j < pending.size(); ++j) {
      out[todo[j]] = {ei.col(static_cast<Eigen::Index>(j)), et.col(static_cast<Eigen::Index>(j))};
    }
  }
  if (cache) {
    for (auto i : todo) cache->put(key, cases[i].id(), out[i]);
  }
  return out;
}

namespace {

GbtTriple fit_triple(const ModelBundle& b, std::span<const storm::ForecastCase> cases,
                     std::span<const CaseEmbedding> emb, std::span<const std::size_t> rows, const gbt::GbtConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index p = b.input_size();
  Eigen::MatrixXd xi(n, p), xt(n, p);
  Eigen::VectorXd yi(n), ylat(n), ylon(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    const auto& c = cases[i];
    xi.row(r) = assemble_input(b, c, emb[i].intensity).transpose();
    xt.row(r) = assemble_input(b, c, emb[i].track).transpose();
    yi[r] = c.target_intensity;
    ylat[r] = c.target_dlat;
    ylon[r] = c.target_dlon;
  }
  GbtTriple t;
  gbt::GbtConfig c = cfg;
  t.models[0] = gbt::fit(xi, yi, c);
  c.seed = cfg.seed + 1;
  t.models[1] = gbt::fit(xt, ylat, c);
  c.seed = cfg.seed + 2;
  t.models[2] = gbt::fit(xt, ylon, c);
  return t;
}

}  // namespace

ModelBundle train_variant(std::span<const storm::ForecastCase> train, std::span<const storm::ForecastCase> validation,
                          const CubeStore* cubes, const PipelineConfig& config, std::ostream* log,
                          TrainLog* train_log) {
  config.validate();
  audit(train, storm::Provenance::Train, "training");
  audit(validation, storm::Provenance::Validation, "validation");

  ModelBundle b;
  b.variant = config.variant;
  b.layout = storm::FeatureLayout(config.include_raw_position);
  b.seed = config.seed;
  const int s = b.stat_dim();

  Eigen::MatrixXd rows(static_cast<Eigen::Index>(train.size()) * storm::kHistorySteps, s);
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].history_stat.cols() != s) {
      throw DimensionError("case " + train[i].id() + " has " + std::to_string(train[i].history_stat.cols()) +
                           " feature columns, layout has " + std::to_string(s));
    }
    rows.middleRows(static_cast<Eigen::Index>(i) * storm::kHistorySteps, storm::kHistorySteps) = train[i].history_stat;
  }
  b.scaler = storm::Scaler::fit(rows, b.layout.scaled_mask());

  if (variant(config.variant).uses_vision) {
    if (!cubes) throw ConfigError("variant " + std::to_string(config.variant) + " needs reanalysis cubes");
    b.channel_stats = cubes->channel_stats(train);
  }

  if (neural(config.variant)) {
    for (int task = 0; task < 2; ++task) {
      const int outputs = task == 0 ? 1 : 2;
      auto net = std::make_shared<nn::HurricastNet<float>>(task_net_config(config, outputs, 17 + task, s));
      const auto tr = make_dataset(b, train, cubes, outputs);
      const auto va = make_dataset(b, validation, cubes, outputs);
      nn::TrainConfig tc = task == 0 ? config.intensity_train : config.track_train;
      tc.seed = config.seed * 7919ULL + 101 + static_cast<std::uint64_t>(task);
      if (log) *log << (task == 0 ? "intensity" : "track") << " network\n";
      auto result = nn::train_encoder_decoder(*net, tr, va, tc, log);
      const char* key = task == 0 ? "val.net_intensity_loss" : "val.net_track_loss";
      b.validation_scores[key] = result.best_val_loss;
      if (train_log) (task == 0 ? train_log->intensity_net : train_log->track_net) = std::move(result);
      (task == 0 ? b.intensity_net : b.track_net) = std::move(net);
    }
  }

  const auto emb = compute_embeddings(b, train, cubes);
  b.layout_hash = layout_hash(b.layout, b.variant, b.embedding_size());

  gbt::GbtConfig gc = config.gbt;
  gc.seed = config.seed * 31ULL + config.gbt.seed;
  std::vector<std::size_t> all(train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  b.gbts["ALL"] = fit_triple(b, train, emb, all, gc);
  if (config.per_basin) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < train.size(); ++i) groups[std::string(storm::label(train[i].basin))].push_back(i);
    for (const auto& [basin, idx] : groups) {
      if (idx.size() < 2) continue;  // too few cases, the global model covers it
      b.gbts[basin] = fit_triple(b, train, emb, idx, gc);
    }
  }

  b.config = {
      {"variant", std::to_string(config.variant)},
      {"include_raw_position", config.include_raw_position ? "1" : "0"},
      {"per_basin", config.per_basin ? "1" : "0"},
      {"gbt.max_depth", std::to_string(config.gbt.max_depth)},
      {"gbt.n_estimators", std::to_string(config.gbt.n_estimators)},
      {"gbt.learning_rate", format_double(config.gbt.learning_rate)},
      {"gbt.subsample", format_double(config.gbt.subsample)},
      {"gbt.colsample_bytree", format_double(config.gbt.colsample_bytree)},
      {"gbt.min_child_weight", format_double(config.gbt.min_child_weight)},
      {"gbt.reg_lambda", format_double(config.gbt.reg_lambda)},
  };

  const auto preds = predict_cases(b, validation, cubes);
  std::vector<double> wind, truth;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    wind.push_back(preds[i].wind);
    truth.push_back(validation[i].target_intensity);
  }
  const auto km = eval::track_errors(preds, validation);
  const double intensity_mae = eval::mae(wind, truth);
  const double track_mae = std::accumulate(km.begin(), km.end(), 0.0) / static_cast<double>(km.size());
  b.validation_scores["val.intensity_mae"] = intensity_mae;
  b.validation_scores["val.track_mae_km"] = track_mae;
  if (log) *log << "validation: intensity MAE " << intensity_mae << " kt, track MAE " << track_mae << " km\n";
  return b;
}

ForecastRecord predict_from_embedding(const ModelBundle& bundle, const storm::ForecastCase& c,
                                      const CaseEmbedding& embedding, const std::string& model_id) {
  const int e = bundle.embedding_size();
  if (layout_hash(bundle.layout, bundle.variant, e) != bundle.layout_hash) {
    throw ConfigError("feature layout differs from the one the bundle was trained with");
  }
  const GbtTriple& t = triple_for(bundle, c);
  const Eigen::VectorXd xi = assemble_input(bundle, c, e ? embedding.intensity : Eigen::VectorXd());
  const Eigen::VectorXd xt = assemble_input(bundle, c, e ? embedding.track : Eigen::VectorXd());
  for (const auto& m : t.models) {
    if (m.feature_count() != xi.size()) {
      throw DimensionError("tree model expects " + std::to_string(m.feature_count()) + " inputs, got " +
                           std::to_string(xi.size()));
    }
  }
  ForecastRecord r;
  r.model_id = model_id.empty() ? model_name(bundle.variant) : model_id;
  r.storm_id = c.storm_id;
  r.t0 = c.t0;
  r.wind = t.models[0].predict_row(xi.transpose());
  r.dlat = t.models[1].predict_row(xt.transpose());
  r.dlon = t.models[2].predict_row(xt.transpose());
  const auto p = eval::advance({c.lat0, c.lon0}, r.dlat, r.dlon);
  r.lat = p.lat;
  r.lon = p.lon;
  return r;
}

ForecastRecord predict_case(const ModelBundle& bundle, const storm::ForecastCase& c, const CubeStore* cubes,
                            const std::string& model_id) {
  const auto emb = compute_embeddings(bundle, std::span<const storm::ForecastCase>(&c, 1), cubes);
  return predict_from_embedding(bundle, c, emb.front(), model_id);
}

std::vector<ForecastRecord> predict_cases(const ModelBundle& bundle, std::span<const storm::ForecastCase> cases,
                                          const CubeStore* cubes, const std::string& model_id,
                                          EmbeddingCache* cache) {
  const auto emb = compute_embeddings(bundle, cases, cubes, cache);
  std::vector<ForecastRecord> out;
  out.reserve(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) out.push_back(predict_from_embedding(bundle, cases[i], emb[i], model_id));
  return out;
}

// ---------------------------------------------------------------------------
// Ensembles

std::vector<std::vector<ForecastRecord>> align_forecasts(std::span<const std::vector<ForecastRecord>> members,
                                                         std::span<const storm::ForecastCase> cases) {
  std::vector<std::vector<ForecastRecord>> out;
  out.reserve(members.size());
  for (std::size_t m = 0; m < members.size(); ++m) {
    std::unordered_map<std::string, const ForecastRecord*> by_id;
    for (const auto& f : members[m]) by_id.emplace(f.case_id(), &f);
    std::vector<ForecastRecord> aligned;
    aligned.reserve(cases.size());
    std::vector<std::string> missing;
    for (const auto& c : cases) {
      auto it = by_id.find(c.id());
      if (it == by_id.end()) {
        missing.push_back(c.id());
      } else {
        aligned.push_back(*it->second);
      }
    }
    if (!missing.empty()) {
      std::string msg = "member " + std::to_string(m) + " lacks " + std::to_string(missing.size()) + " case(s):";
      for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
      if (missing.size() > 10) msg += " ...";
      throw ConfigError(msg);
    }
    out.push_back(std::move(aligned));
  }
  return out;
}

namespace {

double target_of(const ForecastRecord& f, int k) { return k == 0 ? f.wind : (k == 1 ? f.dlat : f.dlon); }
double truth_of(const storm::ForecastCase& c, int k) {
  return k == 0 ? c.target_intensity : (k == 1 ? c.target_dlat : c.target_dlon);
}

}  // namespace

ForecastRecord HumlEnsemble::combine(std::span<const ForecastRecord> member_forecasts, const storm::ForecastCase& c,
                                     const std::string& model_id) const {
  if (member_forecasts.size() != members.size()) {
    throw DimensionError("ensemble expects " + std::to_string(members.size()) + " member forecasts, got " +
                         std::to_string(member_forecasts.size()));
  }
  std::array<double, 3> v{};
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXd x(1, static_cast<Eigen::Index>(members.size()));
    for (std::size_t m = 0; m < members.size(); ++m) x(0, static_cast<Eigen::Index>(m)) = target_of(member_forecasts[m], k);
    v[static_cast<std::size_t>(k)] = models[static_cast<std::size_t>(k)].predict(x)[0];
  }
  ForecastRecord r;
  r.model_id = model_id;
  r.storm_id = c.storm_id;
  r.t0 = c.t0;
  r.wind = v[0];
  r.dlat = v[1];
  r.dlon = v[2];
  const auto p = eval::advance({c.lat0, c.lon0}, r.dlat, r.dlon);
  r.lat = p.lat;
  r.lon = p.lon;
  return r;
}

EnsembleRun train_huml_ensemble(std::span<const std::string> member_names,
                                std::span<const std::vector<ForecastRecord>> val_forecasts,
                                std::span<const std::vector<ForecastRecord>> test_forecasts,
                                std::span<const storm::ForecastCase> val_cases,
                                std::span<const storm::ForecastCase> test_cases, int folds) {
  const std::size_t m = member_names.size();
  if (m == 0) throw ConfigError("ensemble needs at least one member");
  if (val_forecasts.size() != m || test_forecasts.size() != m) {
    throw ConfigError("ensemble: forecast lists do not match the member count");
  }
  if (val_cases.empty() || test_cases.empty()) throw DimensionError("ensemble: empty validation or test cases");
  const auto val = align_forecasts(val_forecasts, val_cases);
  const auto test = align_forecasts(test_forecasts, test_cases);

  EnsembleRun run;
  run.ensemble.members.assign(member_names.begin(), member_names.end());
  const auto n = static_cast<Eigen::Index>(val_cases.size());
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(m));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) x(i, static_cast<Eigen::Index>(j)) = target_of(val[j][i], k);
      y[i] = truth_of(val_cases[static_cast<std::size_t>(i)], k);
    }
    auto gs = ensemble::grid_search_elasticnet(x, y, folds);
    run.ensemble.models[static_cast<std::size_t>(k)] = std::move(gs.model);
    run.ensemble.chosen[static_cast<std::size_t>(k)] = gs.best;
  }
  std::vector<ForecastRecord> members(m);
  for (std::size_t i = 0; i < test_cases.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) members[j] = test[j][i];
    run.test_forecasts.push_back(run.ensemble.combine(members, test_cases[i]));
  }
  return run;
}

EnsembleRun train_huml_ensemble(std::span<const ModelBundle> bundles, std::span<const storm::ForecastCase> val_cases,
                                std::span<const storm::ForecastCase> test_cases, const CubeStore* cubes,
                                int folds) {
  std::vector<std::string> names;
  std::vector<std::vector<ForecastRecord>> val, test;
  for (const auto& b : bundles) {
    names.push_back(model_name(b.variant));
    val.push_back(predict_cases(b, val_cases, cubes));
    test.push_back(predict_cases(b, test_cases, cubes));
  }
  return train_huml_ensemble(names, val, test, val_cases, test_cases, folds);
}

std::vector<ForecastRecord> operational_average(std::span<const ForecastRecord> variant4,
                                                std::span<const ForecastRecord> operational,
                                                const std::string& model_id) {
  std::unordered_map<std::string, std::vector<const ForecastRecord*>> ops;
  for (const auto& f : operational) ops[f.case_id()].push_back(&f);
  std::vector<ForecastRecord> out;
  out.reserve(variant4.size());
  for (const auto& f : variant4) {
    auto it = ops.find(f.case_id());
    if (it == ops.end()) throw ConfigError("no operational forecast for case " + f.case_id());
    std::vector<ForecastRecord> members{f};
    for (const auto* o : it->second) members.push_back(*o);
    out.push_back(ensemble::simple_average(members, model_id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void write_map(io::ByteWriter& w, const std::map<std::string, std::string>& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& [k, v] : m) {
    w.str(k);
    w.str(v);
  }
}

std::map<std::string, std::string> read_map(io::ByteReader& r) {
  std::map<std::string, std::string> m;
  const auto n = r.u32();
  if (n > r.remaining() / 8) throw CorruptionError("bundle: metadata count exceeds file size");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    m[k] = r.str();
  }
  return m;
}

void write_vec(io::ByteWriter& w, const Eigen::VectorXd& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

Eigen::VectorXd read_vec(io::ByteReader& r) {
  const auto n = r.u32();
  if (n > r.remaining() / 8) throw CorruptionError("bundle: vector length exceeds file size");
  Eigen::VectorXd v(n);
  for (auto& x : v) x = r.f64();
  return v;
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw CorruptionError("bundle metadata lacks '" + key + "'");
  return it->second;
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const ModelBundle& b) {
  io::ByteWriter w;
  w.raw("HBND");
  w.u16(kBundleVersion);

  std::map<std::string, std::string> meta = {
      {"variant", std::to_string(b.variant)},
      {"S", std::to_string(b.stat_dim())},
      {"E", std::to_string(b.embedding_size())},
      {"layout_hash", hex(b.layout_hash)},
      {"seed", std::to_string(b.seed)},
      {"include_raw_position", b.layout.include_raw_position() ? "1" : "0"},
  };
  for (const auto& [k, v] : b.config) meta["config." + k] = v;
  for (const auto& [k, v] : b.validation_scores) meta["score." + k] = format_double(v);
  write_map(w, meta);

  write_vec(w, b.scaler.mean());
  write_vec(w, b.scaler.stddev());

  w.u8(b.channel_stats ? 1 : 0);
  if (b.channel_stats) {
    write_vec(w, b.channel_stats->mean);
    write_vec(w, b.channel_stats->stddev);
  }

  const bool nets = b.intensity_net && b.track_net;
  w.u8(nets ? 2 : 0);
  if (nets) {
    for (const auto* net : {b.intensity_net.get(), b.track_net.get()}) {
      write_map(w, net->config().to_map());
      const auto bytes = nn::encode_checkpoint(nn::to_blocks<float>(net->params()));
      w.u32(static_cast<std::uint32_t>(bytes.size()));
      w.bytes(bytes);
    }
  }

  w.u32(static_cast<std::uint32_t>(b.gbts.size()));
  for (const auto& [key, t] : b.gbts) {
    w.str(key);
    for (const auto& m : t.models) m.serialize(w);
  }
  w.u64(io::fnv1a(w.buffer()));
  return w.take();
}

ModelBundle decode_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6) throw CorruptionError("bundle is truncated (" + std::to_string(bytes.size()) + " bytes)");
  io::ByteReader head(bytes);
  if (head.raw(4) != "HBND") throw FormatError("not a model bundle (bad magic)");
  const auto version = head.u16();
  if (version != kBundleVersion) {
    throw VersionError("bundle version " + std::to_string(version) + " is incompatible with this build (expects " +
                       std::to_string(kBundleVersion) + ")");
  }
  if (bytes.size() < 14) throw CorruptionError("bundle is truncated");
  const auto body = bytes.first(bytes.size() - 8);
  io::ByteReader tail(bytes.last(8));
  if (tail.u64() != io::fnv1a(body)) throw CorruptionError("bundle checksum mismatch (truncated or damaged file)");

  io::ByteReader r(body);
  r.raw(6);
  ModelBundle b;
  const auto meta = read_map(r);
  b.variant = std::stoi(need(meta, "variant"));
  variant(b.variant);
  b.layout = storm::FeatureLayout(need(meta, "include_raw_position") == "1");
  b.seed = std::stoull(need(meta, "seed"));
  b.layout_hash = std::stoull(need(meta, "layout_hash"), nullptr, 16);
  for (const auto& [k, v] : meta) {
    if (k.rfind("config.", 0) == 0) b.config[k.substr(7)] = v;
    if (k.rfind("score.", 0) == 0) b.validation_scores[k.substr(6)] = std::stod(v);
  }

  Eigen::VectorXd mean = read_vec(r);
  Eigen::VectorXd sd = read_vec(r);
  if (mean.size() != b.stat_dim() || sd.size() != b.stat_dim()) throw CorruptionError("bundle: scaler size mismatch");
  b.scaler = storm::Scaler::from_parts(std::move(mean), std::move(sd));

  if (r.u8()) {
    ChannelStats cs;
    cs.mean = read_vec(r);
    cs.stddev = read_vec(r);
    b.channel_stats = std::move(cs);
  }

  const auto nets = r.u8();
  if (nets != 0 && nets != 2) throw CorruptionError("bundle: bad network count");
  for (int i = 0; i < nets; ++i) {
    const auto cfg = nn::NetConfig::from_map(read_map(r));
    const auto len = r.u32();
    const auto blocks = nn::decode_checkpoint(r.bytes(len));
    auto net = std::make_shared<nn::HurricastNet<float>>(cfg);
    nn::load_blocks(net->params(), std::span<const nn::CheckpointBlock>(blocks));
    net->freeze();
    (i == 0 ? b.intensity_net : b.track_net) = std::move(net);
  }
  if ((b.variant == 3 || b.variant == 4) != (nets == 2)) {
    throw CorruptionError("bundle: variant " + std::to_string(b.variant) + " with " + std::to_string(nets) +
                          " networks");
  }

  const auto count = r.u32();
  if (count == 0 || count > 64) throw CorruptionError("bundle: bad tree-model count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string key = r.str();
    GbtTriple t;
    for (auto& m : t.models) m = gbt::GbtModel::deserialize(r);
    b.gbts.emplace(std::move(key), std::move(t));
  }
  if (!r.done()) throw CorruptionError("bundle: trailing bytes");
  if (std::to_string(b.embedding_size()) != need(meta, "E")) throw CorruptionError("bundle: embedding size mismatch");
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  io::write_file(path, encode_bundle(bundle));
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw std::runtime_error("no trained bundle at " + path.string() + " (run `hurricast train` first)");
  }
  return decode_bundle(io::read_file(path));
}

}  // namespace hurricast::pipeline
