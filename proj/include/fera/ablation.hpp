#pragma once

// Adaptation sweeps over bands, experts, FECL strength, routing mode and seed.
// Cells are independent and may run on a worker pool; results come back in grid order.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fera/config.hpp"
#include "fera/params.hpp"

namespace fera {

/// Routing value that selects one expert whose rank matches the routed bank's parameter count.
inline constexpr const char* kSingleExpertRouting = "single";

struct AblationCell {
  std::size_t bands = 3;
  std::size_t experts = 3;
  double lambda_f = 0.1;
  std::string routing = "fei_soft";
  std::uint64_t seed = 0;
};

struct AblationResult {
  AblationCell cell;
  std::size_t adapter_parameters = 0;
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
};

/// Cross-product of ablate.bands, ablate.experts, ablate.lambda_f, ablate.routing and ablate.seeds,
/// in that nesting order (seeds innermost).
std::vector<AblationCell> ablation_grid(const RunConfig& cfg);

/// Worker count from FERA_THREADS, defaulting to the number of logical cores.
std::size_t worker_count();

/// Base parameters from model.checkpoint, or a base pretrained from scratch when it is empty.
ParameterSet<float> ablation_base(const RunConfig& cfg);

/// Adapts the base once per cell on the band-boost data of cfg. The data bank is fixed at
/// spectrum.n_bands; each cell's model uses its own band count.
std::vector<AblationResult> run_ablation(const RunConfig& cfg, const ParameterSet<float>& base,
                                         const std::vector<AblationCell>& cells, std::size_t threads);

/// Header `bands,experts,lambda_f,routing,seed,adapter_parameters,initial_val_loss,final_val_loss`.
void write_ablation_csv(std::ostream& os, const std::vector<AblationResult>& results);

struct AblationMean {
  AblationCell cell;  ///< seed is unused
  std::size_t seeds = 0;
  double mean_final_val_loss = 0.0;
};

/// Seed-averaged final losses, one row per distinct non-seed setting, in first-seen order.
std::vector<AblationMean> ablation_means(const std::vector<AblationResult>& results);

/// Header `bands,experts,lambda_f,routing,seeds,mean_final_val_loss`.
void write_ablation_means_csv(std::ostream& os, const std::vector<AblationMean>& means);

}  // namespace fera
