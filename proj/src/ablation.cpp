#include "fera/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <ostream>
#include <string>
#include <thread>

#include "fera/csv.hpp"
#include "fera/errors.hpp"
#include "fera/log.hpp"
#include "fera/model.hpp"
#include "fera/objective.hpp"

namespace fera {

namespace {

bool same_setting(const AblationCell& a, const AblationCell& b) {
  return a.bands == b.bands && a.experts == b.experts && a.lambda_f == b.lambda_f && a.routing == b.routing;
}

AblationResult run_cell(const RunConfig& cfg, const ParameterSet<float>& base, const TrainData& data,
                        const AblationCell& cell) {
  TrainConfig tc = train_config_from(cfg, "adapt");
  tc.n_bands = cell.bands;
  tc.lambda_f = cell.lambda_f;
  tc.seed = cell.seed;
  tc.experts = cell.experts;
  if (cell.routing == kSingleExpertRouting) {
    tc.routing = RoutingMode::none;
    tc.rank = tc.rank * cell.experts;
    tc.experts = 1;
  } else {
    tc.routing = parse_routing_mode(cell.routing);
  }
  tc.thresholds.clear();
  try {
    tc.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  const std::size_t size = cfg.get_count("data.size");
  AdapterModel model = make_adapter_model(tc, base);
  model.bank = build_filter_bank(cell.bands, size, size);
  const TrainReport report = adapt(tc, data, model);
  return AblationResult{cell, report.adapter_parameters, report.initial_val_loss, report.final_val_loss};
}

}  // namespace

std::vector<AblationCell> ablation_grid(const RunConfig& cfg) {
  const auto bands = cfg.get_counts("ablate.bands");
  const auto experts = cfg.get_counts("ablate.experts");
  const auto lambdas = cfg.get_reals("ablate.lambda_f");
  const auto routings = cfg.get_list("ablate.routing");
  std::vector<std::uint64_t> seeds;
  for (std::size_t s : cfg.get_counts("ablate.seeds")) seeds.push_back(s);
  if (bands.empty() || experts.empty() || lambdas.empty() || routings.empty() || seeds.empty()) {
    throw ConfigError("every ablate.* list needs at least one value");
  }
  for (const auto& r : routings) {
    if (r != kSingleExpertRouting) parse_routing_mode(r);
  }
  std::vector<AblationCell> cells;
  for (std::size_t b : bands)
    for (std::size_t m : experts)
      for (double l : lambdas)
        for (const auto& r : routings)
          for (std::uint64_t s : seeds) cells.push_back(AblationCell{b, m, l, r, s});
  return cells;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("FERA_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    log_warning_once("fera_threads", "ignoring invalid FERA_THREADS value");
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

ParameterSet<float> ablation_base(const RunConfig& cfg) {
  const std::string path = cfg.get("model.checkpoint");
  if (!path.empty()) return model_from_checkpoint(load_checkpoint(path)).base;
  const TrainConfig tc = train_config_from(cfg, "pretrain");
  const std::size_t size = cfg.get_count("data.size");
  const FilterBank bank = build_filter_bank(cfg.get_count("spectrum.n_bands"), size, size);
  AdapterModel model = make_base_model(tc, tc.seed);
  model.bank = bank;
  log_info("no model.checkpoint given; pretraining a base for " + std::to_string(tc.steps) + " steps");
  pretrain(tc, train_data_from(cfg, "pretrain", bank), model);
  return model.base;
}

std::vector<AblationResult> run_ablation(const RunConfig& cfg, const ParameterSet<float>& base,
                                         const std::vector<AblationCell>& cells, std::size_t threads) {
  const std::size_t size = cfg.get_count("data.size");
  const FilterBank data_bank = build_filter_bank(cfg.get_count("spectrum.n_bands"), size, size);
  const TrainData data = train_data_from(cfg, "adapt", data_bank);

  std::vector<AblationResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = run_cell(cfg, base, data, cells[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationResult>& results) {
  os << "bands,experts,lambda_f,routing,seed,adapter_parameters,initial_val_loss,final_val_loss\n";
  for (const auto& r : results) {
    os << r.cell.bands << ',' << r.cell.experts << ',' << format_real(r.cell.lambda_f) << ',' << r.cell.routing
       << ',' << r.cell.seed << ',' << r.adapter_parameters << ',' << format_real(r.initial_val_loss) << ','
       << format_real(r.final_val_loss) << '\n';
  }
}

std::vector<AblationMean> ablation_means(const std::vector<AblationResult>& results) {
  std::vector<AblationMean> means;
  for (const auto& r : results) {
    auto it = std::find_if(means.begin(), means.end(), [&](const AblationMean& m) { return same_setting(m.cell, r.cell); });
    if (it == means.end()) {
      means.push_back(AblationMean{r.cell, 0, 0.0});
      it = means.end() - 1;
    }
    ++it->seeds;
    it->mean_final_val_loss += r.final_val_loss;
  }
  for (auto& m : means) m.mean_final_val_loss /= static_cast<double>(m.seeds);
  return means;
}

void write_ablation_means_csv(std::ostream& os, const std::vector<AblationMean>& means) {
  os << "bands,experts,lambda_f,routing,seeds,mean_final_val_loss\n";
  for (const auto& m : means) {
    os << m.cell.bands << ',' << m.cell.experts << ',' << format_real(m.cell.lambda_f) << ',' << m.cell.routing
       << ',' << m.seeds << ',' << format_real(m.mean_final_val_loss) << '\n';
  }
}

}  // namespace fera
