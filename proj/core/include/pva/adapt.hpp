#pragma once

// Maximum mean discrepancy and MMD-regularized fine-tuning that produces the
// 32-candidate IEGM model pool (one candidate per conv freeze/fine-tune mask).

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pva/tinynn.hpp"

namespace pva {

using Points = std::vector<std::vector<double>>;

// Gaussian RBF kernel, biased V-statistic. An empty bandwidth selects the
// median pooled pairwise distance (falling back to 1.0 when it is zero).
struct MmdConfig {
  std::optional<double> bandwidth;

  void validate() const;
};

double median_bandwidth(const Points& x, const Points& y);
double mmd2(const Points& x, const Points& y, const MmdConfig& cfg = {});

struct MmdGradient {
  double value = 0.0;
  double sigma = 1.0;
  Points d_x;  // d mmd2 / d x_i, bandwidth held fixed
  Points d_y;
};
MmdGradient mmd2_with_grad(const Points& x, const Points& y, const MmdConfig& cfg = {});

struct AdaptConfig {
  double lambda_mmd = 1.0;
  nn::TrainConfig train;
  MmdConfig mmd;

  void validate() const;
};

// Indices of the fully connected layers, whose outputs carry the MMD terms.
std::vector<std::size_t> fc_layer_indices(const nn::Model& model);

// Post-activation outputs of `layer` for every input.
Points layer_activations(const nn::Model& model, std::span<const std::span<const float>> inputs,
                         std::size_t layer);

struct AdaptResult {
  nn::Model model;
  std::vector<double> epoch_ce;   // mean source cross-entropy
  std::vector<double> epoch_mmd;  // mean per-batch summed FC mmd2 (0 when lambda = 0)
};

// Minimizes CE(source) + lambda * sum over FC layers of mmd2(source, target)
// per mini-batch. Conv layers train only where the mask says fine-tune.
AdaptResult adapt_with_mask(const nn::Model& base, std::span<const nn::Example> source,
                            std::span<const std::span<const float>> target,
                            const nn::FreezeMask& mask, const AdaptConfig& cfg);

inline constexpr std::size_t kPoolSize = 32;

struct CandidatePool {
  std::vector<nn::Model> models;  // index = FreezeMask::to_index()
  std::vector<double> final_ce;
  std::vector<double> final_mmd;

  const nn::Model& operator[](std::size_t index) const { return models.at(index); }
  std::size_t size() const { return models.size(); }
  void validate() const;
  std::size_t serialized_bytes() const;
};

// One adaptation per mask 0..31 from the same base; candidate m uses seed
// cfg.train.seed + m. Runs up to `threads` adaptations concurrently.
CandidatePool build_pool(const nn::Model& base, std::span<const nn::Example> source,
                         std::span<const std::span<const float>> target, const AdaptConfig& cfg,
                         unsigned threads = 1);

// Pool made of 32 copies of one model.
CandidatePool replicate_pool(const nn::Model& model);

// dir/cand_00.pva1 .. cand_31.pva1 plus dir/manifest.csv.
void save_pool(const CandidatePool& pool, const std::filesystem::path& dir);
CandidatePool load_pool(const std::filesystem::path& dir);

}  // namespace pva
