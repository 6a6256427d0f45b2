#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include "tactis/config.hpp"
#include "tactis/data/timeseries.hpp"
#include "tactis/model/copula.hpp"
#include "tactis/model/encoder.hpp"
#include "tactis/model/marginal_flow.hpp"

namespace tactis::model {

/// Flat token indices (i * length + j) of a window, split by mask.
struct WindowLayout {
  std::vector<std::size_t> observed;
  std::vector<std::size_t> missing;
};
WindowLayout layout_of(const data::TimeSeriesBatch& window);

/// Encoder, marginal flows and attentional copula sharing one parameter set.
class TactisModel {
 public:
  /// `series_ids` lists the series the model learns embeddings for.
  TactisModel(const Config& config, std::size_t num_covariates, std::vector<int> series_ids, std::uint64_t seed);

  const Config& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const std::vector<int>& series_ids() const { return series_ids_; }
  std::size_t num_covariates() const { return num_covariates_; }
  const Encoder& encoder() const { return encoder_; }
  const MarginalFlow& flow() const { return flow_; }
  const AttentionalCopula& copula() const { return copula_; }

  /// Embedding rows of a window's series; unknown ids raise DataError.
  std::vector<std::size_t> embedding_ids(const data::TimeSeriesBatch& window) const;

  /// log g of the missing values of each (standardized) window, shape (B).
  /// permutations[b] orders window b's missing tokens, as positions in layout_of(w).missing.
  Tensor log_likelihood(const std::vector<const data::TimeSeriesBatch*>& windows,
                        const std::vector<std::vector<std::size_t>>& permutations, Rng* dropout_rng = nullptr) const;

  struct Draws {
    std::size_t num_samples = 0;
    std::vector<std::size_t> missing;  // token indices, layout order
    std::vector<double> u;             // num_samples x missing.size(), copula values
    std::vector<double> x;             // same layout, standardized values
  };
  /// Joint draws of a standardized window's missing tokens under one random permutation.
  /// With invert = false only the copula values are produced.
  Draws sample(const data::TimeSeriesBatch& window, std::size_t num_samples, Rng& rng, bool invert = true) const;

  /// Copies of all parameter values, in parameter order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  Tensor log_likelihood_group(const std::vector<const data::TimeSeriesBatch*>& windows,
                              const std::vector<std::vector<std::size_t>>& permutations, Rng* dropout_rng) const;

  Config config_;
  std::size_t num_covariates_ = 0;
  std::vector<int> series_ids_;
  ParameterSet params_;
  Encoder encoder_;
  MarginalFlow flow_;
  AttentionalCopula copula_;
};

struct CheckpointInfo {
  std::size_t epoch = 0;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Text container: format version, config echo, metadata and named tensors.
void save_checkpoint(const std::filesystem::path& path, const TactisModel& model, const CheckpointInfo& info);
TactisModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace tactis::model
