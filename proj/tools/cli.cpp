#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include "config.hpp"
#include "gapa/backbone.hpp"
#include "gapa/calibrate.hpp"
#include "gapa/dataio.hpp"
#include "gapa/errors.hpp"
#include "gapa/gpact.hpp"
#include "gapa/metrics.hpp"
#include "gapa/model.hpp"
#include "gapa/propagate.hpp"
#include "gapa/serialize.hpp"

namespace gapa::cli {

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value configuration file");
    cmd->add_option("--set", overrides, "override one configuration key (key=value)");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& o : overrides) cfg.set(std::string_view(o));
    return cfg;
  }
};

double rmse(const BackboneNetwork& net, const Dataset& data_std, const Standardizer& s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data_std.size(); ++i) {
    const double pred = s.invert_target_mean(predict_scalar(net, data_std.features.row(i)));
    const double y = s.invert_target_mean(data_std.targets[i]);
    acc += (pred - y) * (pred - y);
  }
  return std::sqrt(acc / static_cast<double>(data_std.size()));
}

Standardizer standardizer_or_identity(const NetworkFile& net) {
  if (net.standardizer) return *net.standardizer;
  Standardizer s;
  s.feature_means.assign(net.network.input_dim(), 0.0);
  s.feature_stds.assign(net.network.input_dim(), 1.0);
  return s;
}

// Loads `path` with the network's target column and checks the features.
Dataset load_for_network(const std::filesystem::path& path, const NetworkFile& net) {
  const std::string target = net.target_name.empty() ? "y" : net.target_name;
  Dataset data = load_csv(path, target);
  if (!net.feature_names.empty() && data.column_names != net.feature_names) {
    // Reorder to the network's feature order.
    Matrix features = load_csv_columns(path, net.feature_names);
    data.features = std::move(features);
    data.column_names = net.feature_names;
  }
  if (data.input_dim() != net.network.input_dim()) {
    throw ConfigError("data has " + std::to_string(data.input_dim()) + " feature columns, network expects " +
                      std::to_string(net.network.input_dim()));
  }
  return data;
}

int cmd_gen_toy(std::size_t n, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  const Dataset data = make_toy_gap(n, seed);
  write_csv(data, out_path);
  out << "wrote " << data.size() << " rows to " << out_path << "\n";
  return kSuccess;
}

int cmd_train_backbone(const std::string& data_path, const std::string& target,
                       const std::string& spec_text, const ConfigFlags& flags,
                       const std::string& out_path, std::ostream& out) {
  RunConfig cfg = flags.resolve();
  if (!spec_text.empty()) cfg.set("spec", spec_text);
  const Dataset data = load_csv(data_path, target);
  const auto specs = parse_layer_specs(cfg.get("spec"), data.input_dim());
  const Splits parts = split(data, cfg.split_spec());
  const Standardizer st = fit_standardizer(parts.train);
  const Dataset train = st.apply(parts.train);
  const Dataset val = st.apply(parts.val);

  const TrainResult result = train_backbone(train, specs, cfg.train_config());
  NetworkFile file{result.network, st, data.column_names, data.target_name, cfg.digest()};
  save_network(file, out_path);

  out << "train_rmse=" << format_real(rmse(result.network, train, st))
      << " val_rmse=" << format_real(rmse(result.network, val, st))
      << " config_digest=" << cfg.digest() << "\n";
  return kSuccess;
}

int cmd_fit(const std::string& net_path, const std::string& data_path, const std::string& mode,
            const ConfigFlags& flags, const std::string& out_path, std::ostream& out) {
  RunConfig cfg = flags.resolve();
  cfg.set("calibration", mode);
  const NetworkFile net = load_network_file(net_path);
  const Standardizer st = standardizer_or_identity(net);
  const Dataset data = load_for_network(data_path, net);
  const Splits parts = split(data, cfg.split_spec());
  const Dataset train = st.apply(parts.train);
  const Dataset val = st.apply(parts.val);

  GapaModel model;
  model.network = net.network;
  model.standardizer = st;
  model.mode = cfg.covariance_mode();
  model.layer = fit_gapa_layer(net.network, train, cfg.gapa_fit_config());

  if (mode == "free") {
    const FreeFitResult fit = fit_free(model, val);
    model.calibration = fit.calibration;
    out << "theta1=" << format_real(fit.calibration.theta1)
        << " theta2=" << format_real(fit.calibration.theta2)
        << " calibration_nll=" << format_real(fit.objective) << "\n";
    if (fit.warning) out << "warning: calibration residuals are all zero; variance floor applied\n";
  } else {
    const VariationalFitResult fit = fit_variational(model, train, cfg.variational_config());
    const std::string log_path = out_path + ".trainlog";
    write_text_file(log_path, fit.log.to_text());
    out << "initial_nll=" << format_real(fit.log.entries.front().nll)
        << " final_nll=" << format_real(fit.log.entries.back().nll) << " trainlog=" << log_path
        << "\n";
  }

  save_gapa(GapaFile{model.layer, model.calibration, model.mode, cfg.digest()}, out_path);
  out << "neurons=" << model.layer.neurons.size() << " config_digest=" << cfg.digest() << "\n";
  return kSuccess;
}

GapaModel load_model(const std::string& net_path, const std::string& gapa_path,
                     NetworkFile* net_out = nullptr, GapaFile* gapa_out = nullptr) {
  NetworkFile net = load_network_file(net_path);
  GapaFile gapa = load_gapa(gapa_path);
  GapaModel model = assemble_model(net, gapa);
  if (net_out) *net_out = std::move(net);
  if (gapa_out) *gapa_out = std::move(gapa);
  return model;
}

int cmd_evaluate(const std::string& net_path, const std::string& gapa_path,
                 const std::string& data_path, const std::string& split_name,
                 const ConfigFlags& flags, const std::string& out_path, std::ostream& out) {
  NetworkFile net;
  GapaFile gapa;
  const GapaModel model = load_model(net_path, gapa_path, &net, &gapa);
  const RunConfig cfg = flags.resolve();
  Dataset data = load_for_network(data_path, net);
  if (split_name != "all") {
    const Splits parts = split(data, cfg.split_spec());
    data = split_name == "train" ? parts.train : split_name == "val" ? parts.val : parts.test;
  }
  const MetricsReport report = evaluate(model, data, cfg.get_count("grid"));
  write_text_file(out_path, report_to_text(report, gapa.config_digest));
  out << "nll=" << format_real(report.nll) << " crps=" << format_real(report.crps)
      << " cqm=" << format_real(report.cqm) << " n_points=" << report.n_points << "\n";
  if (report.warning) out << "warning: " << report.floored_points << " points at the variance floor\n";
  return kSuccess;
}

int cmd_predict(const std::string& net_path, const std::string& gapa_path,
                const std::string& data_path, const std::string& out_path, std::ostream& out) {
  NetworkFile net;
  const GapaModel model = load_model(net_path, gapa_path, &net);
  std::vector<std::string> names = net.feature_names;
  if (names.empty()) {
    for (std::size_t j = 0; j < net.network.input_dim(); ++j) names.push_back("x" + std::to_string(j));
  }
  const Matrix x = load_csv_columns(data_path, names);

  std::ofstream csv(out_path);
  if (!csv) throw PersistenceError("cannot write '" + out_path + "'");
  for (const auto& n : names) csv << n << ',';
  csv << "mean,variance,mean_std_units,variance_std_units\n";
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto p = predict_raw(model, x.row(i));
    for (double v : x.row(i)) csv << format_real(v) << ',';
    csv << format_real(p.mean) << ',' << format_real(p.variance) << ','
        << format_real(p.standardized_mean) << ',' << format_real(p.standardized_variance) << '\n';
  }
  if (!csv) throw PersistenceError("failed writing '" + out_path + "'");
  out << "wrote " << x.rows() << " predictions to " << out_path << "\n";
  return kSuccess;
}

int cmd_plotdata(const std::string& net_path, const std::string& gapa_path, double grid_min,
                 double grid_max, std::size_t grid_n, const std::string& out_path,
                 std::ostream& out) {
  const GapaModel model = load_model(net_path, gapa_path);
  if (model.network.input_dim() != 1) {
    throw ConfigError("plotdata needs a model with one input, this one has " +
                      std::to_string(model.network.input_dim()));
  }
  if (grid_n < 2 || !(grid_max > grid_min)) {
    throw ConfigError("plotdata needs grid-n >= 2 and grid-max > grid-min");
  }
  std::ofstream csv(out_path);
  if (!csv) throw PersistenceError("cannot write '" + out_path + "'");
  csv << "x,mean,lower,upper\n";
  for (std::size_t i = 0; i < grid_n; ++i) {
    const double x = grid_min + (grid_max - grid_min) * static_cast<double>(i) /
                                    static_cast<double>(grid_n - 1);
    const auto p = predict_raw(model, std::span<const double>(&x, 1));
    const double sd = std::sqrt(p.variance);
    csv << format_real(x) << ',' << format_real(p.mean) << ',' << format_real(p.mean - 2.0 * sd)
        << ',' << format_real(p.mean + 2.0 * sd) << '\n';
  }
  if (!csv) throw PersistenceError("failed writing '" + out_path + "'");
  out << "wrote " << grid_n << " grid points to " << out_path << "\n";
  return kSuccess;
}

int cmd_grad_check(const std::string& net_path, const std::string& gapa_path,
                   const std::string& data_path, double h, std::size_t max_rows, bool corrupt,
                   std::ostream& out) {
  if (!(h > 0.0)) throw ConfigError("--h must be positive");
  NetworkFile net;
  GapaModel model = load_model(net_path, gapa_path, &net);
  const Standardizer st = standardizer_or_identity(net);
  Dataset data = st.apply(load_for_network(data_path, net));
  if (max_rows > 0 && data.size() > max_rows) {
    std::vector<std::size_t> rows(max_rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    data = data.subset(rows);
  }

  VariationalParams params = initial_variational_params(model.layer);
  if (model.uses_variational()) {
    // Recover the unconstrained form of the stored factors.
    for (std::size_t d = 0; d < model.layer.neurons.size(); ++d) {
      Matrix raw = *model.layer.neurons[d].variational_factor();
      for (std::size_t i = 0; i < raw.rows(); ++i) raw(i, i) = std::log(raw(i, i));
      params.raw_factors[d] = std::move(raw);
    }
  }
  const VariationalObjective objective(model, data, model.mode);
  const std::vector<double> flat = params.flatten();
  std::vector<double> grad;
  objective.evaluate_flat(params, flat, {}, &grad);
  if (corrupt) {
    for (double& g : grad) g *= 2.0;
  }
  const auto result = grad_check(
      [&](std::span<const double> p) { return objective.evaluate_flat(params, p, {}, nullptr); },
      grad, flat, h);
  out << "max_relative_error=" << format_real(result.max_relative_error)
      << " parameters=" << flat.size() << " worst=\"" << params.block_name(result.worst_index)
      << "\"\n";
  return result.max_relative_error <= 1e-4 ? kSuccess : kCheckFailed;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IngestionError*>(&e) ||
      dynamic_cast<const PersistenceError*>(&e) || dynamic_cast<const ShapeError*>(&e)) {
    return kUsageError;
  }
  return kNumericalError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GAPA: post-hoc Gaussian-process activation uncertainty for regression networks"};
  app.require_subcommand(1);

  // gen-toy
  std::size_t toy_n = 0;
  std::uint64_t toy_seed = 0;
  std::string toy_out;
  auto* gen = app.add_subcommand("gen-toy", "write the two-cluster toy regression dataset");
  gen->add_option("--n", toy_n, "number of rows")->required();
  gen->add_option("--seed", toy_seed, "random seed");
  gen->add_option("--out", toy_out, "output CSV")->required();

  // train-backbone
  std::string tb_data, tb_target, tb_spec, tb_out;
  ConfigFlags tb_flags;
  auto* tb = app.add_subcommand("train-backbone", "train the feedforward regression network");
  tb->add_option("--data", tb_data, "training CSV")->required();
  tb->add_option("--target", tb_target, "target column")->required();
  tb->add_option("--spec", tb_spec, "layers, e.g. 32:tanh,32:tanh,1:identity");
  tb->add_option("--out", tb_out, "network file")->required();
  tb_flags.attach(tb);

  // fit
  std::string fit_net, fit_data, fit_mode, fit_out;
  ConfigFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "fit the GP layer and calibrate it");
  fit->add_option("--net", fit_net, "network file")->required();
  fit->add_option("--data", fit_data, "training CSV")->required();
  fit->add_option("--mode", fit_mode, "free|variational")
      ->required()
      ->check(CLI::IsMember({"free", "variational"}));
  fit->add_option("--out", fit_out, "GAPA state file")->required();
  fit_flags.attach(fit);

  // evaluate
  std::string ev_net, ev_gapa, ev_data, ev_out, ev_split = "all";
  ConfigFlags ev_flags;
  auto* ev = app.add_subcommand("evaluate", "NLL, CRPS and CQM on a dataset");
  ev->add_option("--net", ev_net, "network file")->required();
  ev->add_option("--gapa", ev_gapa, "GAPA state file")->required();
  ev->add_option("--data", ev_data, "CSV with the target column")->required();
  ev->add_option("--split", ev_split, "all|train|val|test (split taken from the config)")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  ev->add_option("--out", ev_out, "report file")->required();
  ev_flags.attach(ev);

  // predict
  std::string pr_net, pr_gapa, pr_data, pr_out;
  auto* pr = app.add_subcommand("predict", "per-row predictive mean and variance");
  pr->add_option("--net", pr_net, "network file")->required();
  pr->add_option("--gapa", pr_gapa, "GAPA state file")->required();
  pr->add_option("--data", pr_data, "input CSV")->required();
  pr->add_option("--out", pr_out, "prediction CSV")->required();

  // plotdata
  std::string pl_net, pl_gapa, pl_out;
  double pl_min = -4.0, pl_max = 4.0;
  std::size_t pl_n = 200;
  auto* pl = app.add_subcommand("plotdata", "mean and +-2 sigma bands over a 1-D grid");
  pl->add_option("--net", pl_net, "network file")->required();
  pl->add_option("--gapa", pl_gapa, "GAPA state file")->required();
  pl->add_option("--grid-min", pl_min, "grid start");
  pl->add_option("--grid-max", pl_max, "grid end");
  pl->add_option("--grid-n", pl_n, "grid points");
  pl->add_option("--out", pl_out, "band CSV")->required();

  // grad-check
  std::string gc_net, gc_gapa, gc_data;
  double gc_h = 1e-5;
  std::size_t gc_rows = 20;
  bool gc_corrupt = false;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the variational gradient");
  gc->set_help_flag("--help", "print this help message and exit");
  gc->add_option("--net", gc_net, "network file")->required();
  gc->add_option("--gapa", gc_gapa, "GAPA state file")->required();
  gc->add_option("--data", gc_data, "CSV with the target column")->required();
  gc->add_option("--h", gc_h, "central-difference step");
  gc->add_option("--max-rows", gc_rows, "use at most this many rows (0 = all)");
  gc->add_flag("--corrupt-gradient", gc_corrupt, "double the analytic gradient (detector self-test)");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*gen) return cmd_gen_toy(toy_n, toy_seed, toy_out, out);
    if (*tb) return cmd_train_backbone(tb_data, tb_target, tb_spec, tb_flags, tb_out, out);
    if (*fit) return cmd_fit(fit_net, fit_data, fit_mode, fit_flags, fit_out, out);
    if (*ev) return cmd_evaluate(ev_net, ev_gapa, ev_data, ev_split, ev_flags, ev_out, out);
    if (*pr) return cmd_predict(pr_net, pr_gapa, pr_data, pr_out, out);
    if (*pl) return cmd_plotdata(pl_net, pl_gapa, pl_min, pl_max, pl_n, pl_out, out);
    if (*gc) return cmd_grad_check(gc_net, gc_gapa, gc_data, gc_h, gc_rows, gc_corrupt, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kUsageError;
}

}  // namespace gapa::cli
