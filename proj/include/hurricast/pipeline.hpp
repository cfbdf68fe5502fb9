#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hurricast/cube_store.hpp"
#include "hurricast/ensemble.hpp"
#include "hurricast/forecast.hpp"
#include "hurricast/gbt.hpp"
#include "hurricast/nn/models.hpp"
#include "hurricast/nn/train.hpp"
#include "hurricast/storm_data.hpp"

namespace hurricast::pipeline {

enum class Extractor { None, Tucker, CnnGru, CnnTransformer, Ensemble, OperationalAverage };
std::string_view label(Extractor e);

struct HumlVariant {
  int id = 1;
  std::string_view name;
  bool uses_vision = false;
  Extractor extractor = Extractor::None;
};

/// Variants 1-6. Throws ConfigError outside that range.
const HumlVariant& variant(int id);

/// Embedding length appended to the statistical block: 0, 135, or the
/// network's embedding size. Only defined for variants 1-4.
int embedding_length(int variant_id, const nn::NetConfig& net = {});

struct PipelineConfig {
  int variant = 1;
  bool include_raw_position = false;
  bool per_basin = false;  // one GBT triple per basin instead of a global one
  gbt::GbtConfig gbt;
  nn::NetConfig net;  // decoder and stat_dim are overwritten from the variant and layout
  nn::TrainConfig intensity_train = nn::TrainConfig::for_target(nn::TargetKind::Intensity);
  nn::TrainConfig track_train = nn::TrainConfig::for_target(nn::TargetKind::Track);
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-target boosted trees. Index 0 intensity, 1 dlat, 2 dlon.
struct GbtTriple {
  std::array<gbt::GbtModel, 3> models;
};

/// Everything needed to forecast a case with one trained variant.
struct ModelBundle {
  int variant = 1;
  storm::FeatureLayout layout;
  storm::Scaler scaler;
  std::optional<ChannelStats> channel_stats;  // vision variants
  // Neural extractors: one per task, frozen. Null for variants 1 and 2.
  std::shared_ptr<nn::HurricastNet<float>> intensity_net;
  std::shared_ptr<nn::HurricastNet<float>> track_net;
  std::map<std::string, GbtTriple> gbts;  // key "ALL" or a basin label
  std::uint64_t layout_hash = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;  // snapshot of the effective settings
  std::map<std::string, double> validation_scores;

  int stat_dim() const { return static_cast<int>(layout.size()); }
  int embedding_size() const;
  int input_size() const { return storm::kHistorySteps * stat_dim() + embedding_size(); }
  /// Identifies the frozen extractor; empty for variant 1.
  std::uint64_t extractor_hash() const;
};

/// Hash of column names, variant and embedding length.
std::uint64_t layout_hash(const storm::FeatureLayout& layout, int variant_id, int embedding);

/// Embeddings of one case, per task. Tucker features are shared.
struct CaseEmbedding {
  Eigen::VectorXd intensity;
  Eigen::VectorXd track;
};

/// Flattened, scaled 8 x S history (row after row, oldest step first)
/// followed by the embedding.
Eigen::VectorXd assemble_input(const ModelBundle& bundle, const storm::ForecastCase& c,
                               const Eigen::VectorXd& embedding);

/// Disk cache of embeddings keyed by extractor hash and case id.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir);
  std::optional<CaseEmbedding> get(std::uint64_t extractor, const std::string& case_id) const;
  void put(std::uint64_t extractor, const std::string& case_id, const CaseEmbedding& e);
  /// Writes pending entries. Also called by the destructor.
  void flush();
  ~EmbeddingCache();

 private:
  void load(std::uint64_t extractor) const;
  std::filesystem::path file(std::uint64_t extractor) const;

  std::filesystem::path dir_;
  mutable std::map<std::uint64_t, std::map<std::string, CaseEmbedding>> entries_;
  std::map<std::uint64_t, bool> dirty_;
};

/// Embeddings for many cases. `cubes` holds raw (unstandardized) slices.
std::vector<CaseEmbedding> compute_embeddings(const ModelBundle& bundle, std::span<const storm::ForecastCase> cases,
                                              const CubeStore* cubes, EmbeddingCache* cache = nullptr);

struct TrainLog {
  std::optional<nn::TrainResult> intensity_net;
  std::optional<nn::TrainResult> track_net;
};

/// Fits the variant's extractor (if any) and three boosted-tree models.
/// Training cases must carry the Train tag and validation cases the
/// Validation tag; anything else is rejected as leakage.
ModelBundle train_variant(std::span<const storm::ForecastCase> train, std::span<const storm::ForecastCase> validation,
                          const CubeStore* cubes, const PipelineConfig& config, std::ostream* log = nullptr,
                          TrainLog* train_log = nullptr);

/// Forecast from precomputed embeddings. Pure.
ForecastRecord predict_from_embedding(const ModelBundle& bundle, const storm::ForecastCase& c,
                                      const CaseEmbedding& embedding, const std::string& model_id = {});

/// Forecast for one case. Vision variants need the case window in `cubes`.
ForecastRecord predict_case(const ModelBundle& bundle, const storm::ForecastCase& c, const CubeStore* cubes,
                            const std::string& model_id = {});

std::vector<ForecastRecord> predict_cases(const ModelBundle& bundle, std::span<const storm::ForecastCase> cases,
                                          const CubeStore* cubes, const std::string& model_id = {},
                                          EmbeddingCache* cache = nullptr);

/// Default model id for a bundle ("HUML-1", ...).
std::string model_name(int variant_id);

/// Reorders each member's forecasts to follow `cases`. Throws ConfigError
/// listing up to ten missing case ids.
std::vector<std::vector<ForecastRecord>> align_forecasts(std::span<const std::vector<ForecastRecord>> members,
                                                         std::span<const storm::ForecastCase> cases);

/// Stacking weights per target, fitted on validation-period base forecasts.
struct HumlEnsemble {
  std::vector<std::string> members;
  std::array<ensemble::ElasticNetModel, 3> models;  // intensity, dlat, dlon
  std::array<ensemble::ElasticNetConfig, 3> chosen;

  ForecastRecord combine(std::span<const ForecastRecord> member_forecasts, const storm::ForecastCase& c,
                         const std::string& model_id = "HUML-5") const;
};

struct EnsembleRun {
  HumlEnsemble ensemble;
  std::vector<ForecastRecord> test_forecasts;
};

/// Fits the stacked ensemble on validation forecasts and applies it to the
/// test forecasts. `val_forecasts[m]` and `test_forecasts[m]` belong to
/// member m and may come in any order.
EnsembleRun train_huml_ensemble(std::span<const std::string> member_names,
                                std::span<const std::vector<ForecastRecord>> val_forecasts,
                                std::span<const std::vector<ForecastRecord>> test_forecasts,
                                std::span<const storm::ForecastCase> val_cases,
                                std::span<const storm::ForecastCase> test_cases, int folds = 5);

/// Convenience overload predicting with the base bundles first.
EnsembleRun train_huml_ensemble(std::span<const ModelBundle> bundles, std::span<const storm::ForecastCase> val_cases,
                                std::span<const storm::ForecastCase> test_cases, const CubeStore* cubes,
                                int folds = 5);

/// Variant 6: per-case simple average of the variant-4 forecast and the
/// operational members. Members missing a case are skipped for that case;
/// a case with no operational member at all throws ConfigError.
std::vector<ForecastRecord> operational_average(std::span<const ForecastRecord> variant4,
                                                std::span<const ForecastRecord> operational,
                                                const std::string& model_id = "HUML-6");

// ---------------------------------------------------------------------------
// Bundle persistence
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kBundleVersion = 1;

/// "HBND", u16 version, metadata, scaler, channel stats, checkpoint blocks,
/// boosted trees, then a u64 FNV-1a checksum of everything before it.
std::vector<std::uint8_t> encode_bundle(const ModelBundle& bundle);
ModelBundle decode_bundle(std::span<const std::uint8_t> bytes);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace hurricast::pipeline
