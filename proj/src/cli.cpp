#include "fera/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "fera/ablation.hpp"
#include "fera/checks.hpp"
#include "fera/csv.hpp"
#include "fera/datagen.hpp"
#include "fera/errors.hpp"
#include "fera/log.hpp"
#include "fera/model.hpp"
#include "fera/objective.hpp"
#include "fera/rng.hpp"
#include "fera/spectrum.hpp"
#include "fera/svg.hpp"
#include "fera/tensor_io.hpp"

namespace fera {

namespace fs = std::filesystem;

namespace {

/// Output directory plus the list of files written so far, for the manifest.
class Run {
 public:
  Run(const RunConfig& cfg, fs::path out) : cfg_(cfg), out_(std::move(out)) {}

  const RunConfig& cfg() const { return cfg_; }
  const fs::path& out() const { return out_; }

  void emit(const std::string& rel, const std::string& text) {
    const fs::path path = out_ / rel;
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("failed writing " + path.string());
    files_.push_back(rel);
  }

  /// Records a file that was written by other code.
  void record(const std::string& rel) { files_.push_back(rel); }

  const std::vector<std::string>& files() const { return files_; }

 private:
  const RunConfig& cfg_;
  fs::path out_;
  std::vector<std::string> files_;
};

std::string line_plot(const LinePlot& plot, const std::string& csv_text) {
  std::ostringstream os;
  write_line_plot_svg(os, plot, csv_text);
  return os.str();
}

std::size_t field_size(const RunConfig& cfg) { return cfg.get_count("data.size"); }

NoiseSchedule schedule_from(const RunConfig& cfg) {
  return make_schedule(parse_schedule_kind(cfg.get("schedule.kind")), cfg.get_count("schedule.steps"));
}

/// The analysis input: data.input when set, otherwise one synthetic field of data.kind.
Field analysis_field(const RunConfig& cfg) {
  const std::string input = cfg.get("data.input");
  if (!input.empty()) return load_field<float>(input);
  const SyntheticSpec spec = synthetic_spec_from(cfg, parse_synthetic_kind(cfg.get("data.kind")));
  const FilterBank bank = build_filter_bank(cfg.get_count("spectrum.n_bands"), spec.size, spec.size);
  return generate<float>(spec, bank);
}

AdapterModel load_model(const RunConfig& cfg, const std::string& command) {
  const std::string path = cfg.get("model.checkpoint");
  if (path.empty()) throw ConfigError(command + " needs model.checkpoint");
  return model_from_checkpoint(load_checkpoint(path));
}

std::vector<std::string> band_names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t k = 1; k <= n; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

void cmd_analyze(Run& run) {
  const RunConfig& cfg = run.cfg();
  const Field x0 = analysis_field(cfg);
  const FilterBank bank = build_filter_bank(cfg.get_count("spectrum.n_bands"), x0.shape().height, x0.shape().width);
  const auto rows = energy_evolution(x0, schedule_from(cfg), bank, cfg.get_u64("run.seed"));

  std::ostringstream csv;
  write_evolution_csv(csv, rows);
  run.emit("evolution.csv", csv.str());

  LinePlot plot{"Band energy share over the forward process", "t", "energy share", false, {}};
  for (std::size_t k = 0; k < bank.n_bands; ++k) {
    Series s{"band " + std::to_string(k + 1), {}, {}};
    for (const auto& r : rows) {
      s.x.push_back(static_cast<double>(r.t));
      s.y.push_back(r.e[k]);
    }
    plot.series.push_back(std::move(s));
  }
  run.emit("evolution.svg", line_plot(plot, csv.str()));
}

void cmd_snr(Run& run) {
  const RunConfig& cfg = run.cfg();
  const Field x0 = analysis_field(cfg);
  const NoiseSchedule schedule = schedule_from(cfg);
  const FilterBank bank = build_filter_bank(cfg.get_count("spectrum.n_bands"), x0.shape().height, x0.shape().width);
  const std::size_t draws = cfg.get_count("snr.noise_draws");
  const std::uint64_t seed = cfg.get_u64("run.seed");
  const BandSnrTable table = band_snr_table(x0, schedule, bank, draws, seed);

  std::ostringstream bands;
  {
    std::vector<std::string> header{"t", "alpha_bar"};
    for (const auto& n : band_names("snr", bank.n_bands)) header.push_back(n);
    write_csv_row(bands, header);
    for (std::size_t t = 0; t < table.snr.size(); ++t) {
      std::vector<double> row{static_cast<double>(t), table.alpha_bar[t]};
      row.insert(row.end(), table.snr[t].begin(), table.snr[t].end());
      write_csv_row(bands, row);
    }
  }
  run.emit("snr_bands.csv", bands.str());

  LinePlot plot{"Per-band SNR", "t", "SNR", true, {}};
  for (std::size_t k = 0; k < bank.n_bands; ++k) {
    Series s{"band " + std::to_string(k + 1), {}, {}};
    for (std::size_t t = 0; t < table.snr.size(); ++t) {
      s.x.push_back(static_cast<double>(t));
      s.y.push_back(table.snr[t][k]);
    }
    plot.series.push_back(std::move(s));
  }
  run.emit("snr_bands.svg", line_plot(plot, bands.str()));

  std::ostringstream crossings;
  crossings << "band,crossing_step\n";
  for (std::size_t k = 0; k < table.crossing_steps.size(); ++k) {
    crossings << k + 1 << ',' << table.crossing_steps[k] << '\n';
  }
  run.emit("crossings.csv", crossings.str());

  const std::size_t bins = cfg.get_count("snr.bins");
  const std::size_t total = schedule.total_steps;
  std::ostringstream radial, slopes;
  radial << "t,f,count,snr\n";
  slopes << "t,slope\n";
  for (std::size_t t : {total / 4, total / 2, 3 * total / 4}) {
    const SnrProfile p = measure_snr(x0, schedule, t, bins, draws, seed);
    for (std::size_t b = 0; b < p.bin_centers.size(); ++b) {
      radial << t << ',' << format_real(p.bin_centers[b]) << ',' << p.counts[b] << ',' << format_real(p.snr[b]) << '\n';
    }
    const double slope = fit_loglog_slope(p.bin_centers, p.snr, p.counts, kSlopeFitLow, kSlopeFitHigh);
    slopes << t << ',' << format_real(slope) << '\n';
  }
  run.emit("snr_radial.csv", radial.str());
  run.emit("snr_slope.csv", slopes.str());

  if (cfg.get_bool("snr.assert_monotone")) {
    const auto& c = table.crossing_steps;
    for (std::size_t k = 1; k < c.size(); ++k) {
      if (c[k] > c[k - 1]) {
        throw AssertionError("band " + std::to_string(k + 1) + " crosses SNR 1 at t=" + std::to_string(c[k]) +
                             ", before band " + std::to_string(k) + " (t=" + std::to_string(c[k - 1]) + ")");
      }
    }
  }
}

void save_model(Run& run, const AdapterModel& model) {
  save_checkpoint(run.out() / "checkpoint", model_checkpoint(model));
  run.record("checkpoint/manifest.txt");
  run.record("checkpoint/params.bin");
}

void cmd_train(Run& run) {
  const RunConfig& cfg = run.cfg();
  const std::string stage = cfg.get("train.stage");
  const TrainConfig tc = train_config_from(cfg, stage);
  const std::size_t size = field_size(cfg);
  const FilterBank bank = build_filter_bank(tc.n_bands, size, size);

  AdapterModel model;
  if (stage == "pretrain") {
    model = make_base_model(tc, tc.seed);
  } else {
    model = make_adapter_model(tc, load_model(cfg, "train.stage=adapt").base);
  }
  model.bank = bank;
  const TrainData data = train_data_from(cfg, stage, bank);
  const std::vector<float> base_before = model.base.flatten();
  const TrainReport report = stage == "pretrain" ? pretrain(tc, data, model) : adapt(tc, data, model);
  if (stage == "adapt" && model.base.flatten() != base_before) {
    throw AssertionError("base parameters changed during adaptation");
  }
  save_model(run, model);

  std::ostringstream log, val, summary;
  write_train_csv(log, report.log);
  write_validation_csv(val, report);
  summary << "stage,steps,initial_val_loss,final_val_loss,trainable_parameters,adapter_parameters,degenerate_fecl\n"
          << stage << ',' << tc.steps << ',' << format_real(report.initial_val_loss) << ','
          << format_real(report.final_val_loss) << ',' << report.trainable_parameters << ','
          << report.adapter_parameters << ',' << report.degenerate_fecl << '\n';
  run.emit("train.csv", log.str());
  run.emit("validation.csv", val.str());
  run.emit("train_summary.csv", summary.str());

  LinePlot plot{"Training loss", "step", "loss", true, {}};
  Series total{"total", {}, {}}, denoise{"denoise", {}, {}};
  for (const auto& s : report.log) {
    total.x.push_back(static_cast<double>(s.step));
    total.y.push_back(s.loss_total);
    denoise.x.push_back(static_cast<double>(s.step));
    denoise.y.push_back(s.loss_denoise);
  }
  plot.series = {total, denoise};
  run.emit("train.svg", line_plot(plot, log.str()));
}

/// Radial amplitude spectrum averaged over fields, and its slope over the fit range.
std::pair<RadialSpectrum, double> mean_spectrum(const std::vector<Field>& fields, std::size_t bins) {
  RadialSpectrum mean;
  for (const auto& f : fields) {
    const RadialSpectrum r = radial_spectrum(f, bins);
    if (mean.amplitudes.empty()) {
      mean = r;
      continue;
    }
    for (std::size_t b = 0; b < r.amplitudes.size(); ++b) mean.amplitudes[b] += r.amplitudes[b];
  }
  for (auto& a : mean.amplitudes) a /= static_cast<double>(fields.size());
  const double slope = fit_loglog_slope(mean.bin_centers, mean.amplitudes, mean.counts, kSlopeFitLow, kSlopeFitHigh);
  return {mean, slope};
}

void cmd_sample(Run& run) {
  const RunConfig& cfg = run.cfg();
  const AdapterModel model = load_model(cfg, "sample");
  const NoiseSchedule schedule = schedule_from(cfg);
  const std::size_t count = cfg.get_count("sample.count");
  if (count == 0) throw ConfigError("sample.count must be positive");
  const std::size_t size = field_size(cfg);
  const bool trajectory = cfg.get_bool("sample.trajectory");

  std::vector<Field> finals;
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < count; ++i) {
    SampleOptions opt;
    opt.steps = cfg.get_count("sample.steps");
    opt.seed = dataset_member_seed(cfg.get_u64("run.seed"), i);
    opt.shape = Shape{model.config.channels, size, size};
    opt.keep_trajectory = trajectory;
    const DiffusionSample s = sample(model, schedule, opt);
    char name[64];
    std::snprintf(name, sizeof name, "samples/sample_%05zu.fera", i);
    fs::create_directories(run.out() / "samples");
    save_field(run.out() / name, s.final);
    run.record(name);
    for (std::size_t j = 0; j < s.trajectory.size(); ++j) {
      std::snprintf(name, sizeof name, "samples/sample_%05zu_step_%03zu.fera", i, j);
      save_field(run.out() / name, s.trajectory[j]);
      run.record(name);
    }
    if (i == 0) {
      std::ostringstream trace;
      write_trace_csv(trace, s.trace);
      run.emit("trace.csv", trace.str());
    }
    fallbacks += s.stats.degenerate_fallbacks;
    finals.push_back(s.final);
  }

  const SyntheticSpec spec = synthetic_spec_from(cfg, SyntheticKind::powerlaw);
  const FilterBank bank = build_filter_bank(cfg.get_count("spectrum.n_bands"), size, size);
  const auto reference = make_dataset(spec, bank, count, spec.seed);
  const std::size_t bins = cfg.get_count("snr.bins");
  const auto [ss, sample_slope] = mean_spectrum(finals, bins);
  const auto [rs, reference_slope] = mean_spectrum(reference, bins);

  std::ostringstream spectrum;
  spectrum << "f,count,samples,reference\n";
  for (std::size_t b = 0; b < ss.bin_centers.size(); ++b) {
    spectrum << format_real(ss.bin_centers[b]) << ',' << ss.counts[b] << ',' << format_real(ss.amplitudes[b]) << ','
             << format_real(rs.amplitudes[b]) << '\n';
  }
  run.emit("spectrum.csv", spectrum.str());
  LinePlot plot{"Radial amplitude spectrum", "f", "mean |X(f)|", true, {}};
  plot.series = {Series{"samples", ss.bin_centers, ss.amplitudes}, Series{"reference", rs.bin_centers, rs.amplitudes}};
  run.emit("spectrum.svg", line_plot(plot, spectrum.str()));

  std::ostringstream summary;
  summary << "samples,steps,degenerate_fallbacks,sample_slope,reference_slope\n"
          << count << ',' << cfg.get_count("sample.steps") << ',' << fallbacks << ',' << format_real(sample_slope)
          << ',' << format_real(reference_slope) << '\n';
  run.emit("sample_summary.csv", summary.str());
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t switch_count(const std::vector<TraceRow>& rows) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) n += argmax(rows[i].alpha) != argmax(rows[i - 1].alpha);
  return n;
}

std::string heatmap(const std::vector<TraceRow>& rows, const std::string& title, const std::string& csv_text) {
  Heatmap map;
  map.title = title;
  map.x_label = "sampling step t";
  const std::size_t experts = rows.empty() ? 0 : rows.front().alpha.size();
  map.values.assign(experts, {});
  for (std::size_t m = 0; m < experts; ++m) map.row_labels.push_back("expert " + std::to_string(m + 1));
  for (const auto& r : rows) {
    map.col_labels.push_back(std::to_string(r.t));
    for (std::size_t m = 0; m < experts; ++m) map.values[m].push_back(r.alpha[m]);
  }
  std::ostringstream os;
  write_heatmap_svg(os, map, csv_text);
  return os.str();
}

void cmd_route_compare(Run& run) {
  const RunConfig& cfg = run.cfg();
  AdapterModel soft = load_model(cfg, "route-compare");
  const TrainConfig tc = train_config_from(cfg, "adapt");
  if (!soft.has_adapters() || soft.routing.experts < 2) {
    log_warning("checkpoint has no routed experts; attaching a fresh bank of " + std::to_string(tc.experts));
    FilterBank bank = soft.bank;
    soft = make_adapter_model(tc, soft.base);
    soft.bank = bank;
  }
  const std::size_t experts = soft.routing.experts;
  if (!soft.router) {
    log_warning("checkpoint has no router; using a freshly initialised one");
    soft.router = init_router<float>(soft.bank.n_bands, experts, tc.tau, tc.seed);
  }
  if (!(soft.routing.mode == RoutingMode::fei_soft || soft.routing.mode == RoutingMode::timestep_soft)) {
    soft.routing.mode = RoutingMode::fei_soft;
  }
  AdapterModel discrete = soft;
  discrete.routing.mode = RoutingMode::discrete;
  discrete.routing.thresholds = tc.thresholds;

  SampleOptions opt;
  opt.steps = cfg.get_count("sample.steps");
  opt.seed = cfg.get_u64("run.seed");
  opt.shape = Shape{soft.config.channels, field_size(cfg), field_size(cfg)};
  const NoiseSchedule schedule = schedule_from(cfg);

  std::ostringstream compare;
  compare << "router,steps,max_adjacent_jump,switches\n";
  for (const auto& [name, model] : {std::pair<std::string, const AdapterModel*>{"soft", &soft}, {"discrete", &discrete}}) {
    const DiffusionSample s = sample(*model, schedule, opt);
    std::ostringstream trace;
    write_trace_csv(trace, s.trace);
    run.emit("trace_" + name + ".csv", trace.str());
    run.emit("heatmap_" + name + ".svg", heatmap(s.trace, "Routing weights (" + name + ")", trace.str()));
    compare << name << ',' << s.trace.size() << ',' << format_real(max_adjacent_jump(s.trace)) << ','
            << switch_count(s.trace) << '\n';
  }
  run.emit("compare.csv", compare.str());
}

void cmd_ablate(Run& run) {
  const RunConfig& cfg = run.cfg();
  const auto cells = ablation_grid(cfg);
  const ParameterSet<float> base = ablation_base(cfg);
  const auto results = run_ablation(cfg, base, cells, worker_count());
  std::ostringstream summary, means_csv;
  write_ablation_csv(summary, results);
  const auto means = ablation_means(results);
  write_ablation_means_csv(means_csv, means);
  run.emit("summary.csv", summary.str());
  run.emit("means.csv", means_csv.str());

  auto order = means;
  std::stable_sort(order.begin(), order.end(),
                   [](const AblationMean& a, const AblationMean& b) { return a.mean_final_val_loss < b.mean_final_val_loss; });
  std::string line = "mean final validation loss, best first:";
  for (const auto& m : order) {
    line += " " + m.cell.routing + "(bands=" + std::to_string(m.cell.bands) + ",experts=" + std::to_string(m.cell.experts) +
            ",lambda_f=" + format_real(m.cell.lambda_f) + ")=" + format_real(m.mean_final_val_loss);
  }
  log_info(line);
}

void cmd_gradcheck(Run& run) {
  const RunConfig& cfg = run.cfg();
  const auto entries = run_all_grad_checks(cfg.get_u64("run.seed"), cfg.get_real("gradcheck.tolerance"));
  std::ostringstream csv;
  csv << "name,parameters,max_rel_error,worst_parameter,passed\n";
  std::vector<std::string> failed;
  for (const auto& e : entries) {
    csv << e.name << ',' << e.result.parameter_count << ',' << format_real(e.result.max_rel_error) << ','
        << e.result.worst_name << ',' << (e.passed() ? "true" : "false") << '\n';
    if (!e.passed()) failed.push_back(e.name);
  }
  run.emit("gradcheck.csv", csv.str());
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    throw AssertionError("gradient checks failed: " + names);
  }
}

const std::map<std::string, std::function<void(Run&)>>& commands() {
  static const std::map<std::string, std::function<void(Run&)>> c{
      {"analyze", cmd_analyze}, {"snr", cmd_snr},       {"train", cmd_train},         {"sample", cmd_sample},
      {"route-compare", cmd_route_compare}, {"ablate", cmd_ablate}, {"gradcheck", cmd_gradcheck},
  };
  return c;
}

void write_manifest(const fs::path& out, const std::string& command, bool complete, const std::vector<std::string>& files,
                    const std::string& error) {
  std::ofstream os(out / "manifest.txt", std::ios::binary);
  os << "command " << command << '\n' << "status " << (complete ? "complete" : "partial") << '\n';
  for (const auto& f : files) os << "file " << f << '\n';
  if (!error.empty()) os << "error " << error << '\n';
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"analyze", "snr", "train", "sample", "route-compare", "ablate", "gradcheck"};
  return names;
}

RunConfig resolve_config(const CommandOptions& options) {
  RunConfig cfg = RunConfig::defaults();
  if (!options.config.empty()) cfg.load_file(options.config);
  for (const auto& o : options.overrides) cfg.apply_override(o);
  if (options.seed) cfg.set("run.seed", std::to_string(*options.seed));
  return cfg;
}

int run_command(const CommandOptions& options) {
  const auto it = commands().find(options.command);
  if (it == commands().end()) {
    std::cerr << "fera: unknown command '" << options.command << "'\n";
    return kExitUsage;
  }
  if (options.out.empty()) {
    std::cerr << "fera: --out is required\n";
    return kExitUsage;
  }
  RunConfig cfg;
  try {
    cfg = resolve_config(options);
  } catch (const Error& e) {
    std::cerr << "fera: " << e.what() << '\n';
    return kExitUsage;
  }

  int code = kExitOk;
  std::string error;
  Run run(cfg, options.out);
  try {
    fs::create_directories(options.out);
    std::ostringstream echo;
    cfg.write(echo);
    run.emit("config.ini", echo.str());
    it->second(run);
  } catch (const ConfigError& e) {
    error = e.what();
    code = kExitUsage;
  } catch (const std::exception& e) {
    error = e.what();
    code = kExitFailure;
  }
  if (!error.empty()) std::cerr << "fera " << options.command << ": " << error << '\n';
  try {
    write_manifest(options.out, options.command, code == kExitOk, run.files(), error);
  } catch (const std::exception& e) {
    std::cerr << "fera: cannot write manifest: " << e.what() << '\n';
    code = kExitFailure;
  }
  return code;
}

}  // namespace fera
