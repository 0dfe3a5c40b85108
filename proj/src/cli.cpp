#include "opbil/cli.hpp"

#include "opbil/checkpoint.hpp"
#include "opbil/dataset_io.hpp"
#include "opbil/experiment.hpp"
#include "opbil/late_fusion.hpp"
#include "opbil/report.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace opbil::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Config entries become "--key=value" unless the same flag is already on the
// command line, so explicit flags win.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file argument");
      path = args[i + 1];
      args.erase(args.begin() + long(i), args.begin() + long(i) + 2);
      break;
    }
    if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
      args.erase(args.begin() + long(i));
      break;
    }
  }
  if (path.empty()) return args;
  if (args.empty()) throw UsageError("--config given without a command");

  std::ifstream in(path);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot read config " + path);
  std::stringstream text;
  text << in.rdbuf();

  std::vector<std::string> extra;
  for (auto [key, value] : parse_config_text(text.str())) {
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.starts_with(flag + "=");
    });
    if (!given) extra.push_back(flag + "=" + value);
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

std::string effective_config(const CLI::App& sub) {
  std::string line = "opbil " + sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const std::string& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    if (value.empty()) continue;
    line += " --" + opt->get_lnames()[0] + " " + value;
  }
  return line;
}

std::vector<Variant> parse_variant_list(const std::string& text) {
  std::vector<Variant> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(parse_variant(trim(item)));
  if (out.empty()) throw UsageError("--models lists no variants");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write " + path.string());
  out << text;
  if (!out) throw ReportError("failed writing " + path.string());
}

std::string history_csv(const TrainResult& result) {
  std::string out = "epoch,train_loss,val_precision,val_recall,val_f1\n";
  char buf[160];
  for (const EpochRecord& r : result.history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.6f,%.6f\n", r.epoch, r.train_loss,
                  r.validation.precision, r.validation.recall, r.validation.f1);
    out += buf;
  }
  return out;
}

struct Options {
  // gen-data
  Index n_train = 2000;
  Index n_test = 500;
  FieldConfig field;
  // shared
  std::string data;
  std::string out;
  std::uint64_t seed = 7;
  double threshold = 0.5;
  // training
  std::string model = "op-bilinear";
  std::string models;
  int epochs = TrainConfig{}.epochs;
  double lr = 1e-3;
  double l1 = 1e-3;
  Index batch = 32;
  double validation_fraction = 0.1;
  std::string init = "random";
  std::string visual_checkpoint;
  std::string seismic_checkpoint;
  std::string checkpoint;
  double u_visual = 0.35;
  double u_seismic = 0.15;
  int samples = 3;
};

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.epochs = o.epochs;
  c.batch = o.batch;
  c.adam.lr = o.lr;
  c.l1 = o.l1;
  c.seed = o.seed;
  c.threshold = o.threshold;
  c.validation_fraction = o.validation_fraction;
  c.validate();
  return c;
}

ModelSpec base_spec(const Options& o, const LoadedDataset& data) {
  ModelSpec s;
  s.variant = parse_variant(o.model);
  s.visual_size = data.visual_size;
  s.seismic_length = data.seismic_length;
  s.l1 = o.l1;
  s.seed = o.seed;
  return s;
}

int cmd_gen_data(const Options& o, std::ostream& out, std::ostream& err) {
  FieldConfig field = o.field;
  field.seed = o.seed;
  field.validate();
  err << "simulating " << o.n_train << " train and " << o.n_test << " test windows\n";
  const SimulatedDataset data = simulate_dataset(field, o.n_train, o.n_test);
  write_dataset(o.out, data, field);
  long pos_train = std::count_if(data.train.begin(), data.train.end(), [](auto& w) { return w.label; });
  long pos_test = std::count_if(data.test.begin(), data.test.end(), [](auto& w) { return w.label; });
  out << "wrote " << o.out << ": train " << data.train.size() << " (" << pos_train
      << " positive), test " << data.test.size() << " (" << pos_test << " positive)\n";
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const TrainConfig tc = train_config(o);
  const InitMode init = parse_init_mode(o.init);
  parse_variant(o.model);
  const LoadedDataset data = read_dataset(o.data);
  const ModelSpec spec = base_spec(o, data);

  std::optional<LoadedCheckpoint> visual, seismic;
  if (init == InitMode::FromCheckpoints) {
    if (uses_visual(spec.variant)) {
      if (o.visual_checkpoint.empty())
        throw UsageError("--init from-checkpoints needs --visual-checkpoint for " + o.model);
      visual = load_checkpoint(o.visual_checkpoint);
    }
    if (uses_seismic(spec.variant)) {
      if (o.seismic_checkpoint.empty())
        throw UsageError("--init from-checkpoints needs --seismic-checkpoint for " + o.model);
      seismic = load_checkpoint(o.seismic_checkpoint);
    }
  }
  Model model = initial_model(spec, init, visual ? &visual->model : nullptr,
                              seismic ? &seismic->model : nullptr);
  err << o.model << ": " << model.parameter_count() << " parameters, " << data.data.train.size()
      << " training windows\n";
  const TrainResult result = train(model, data.data.train, tc, [&](const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d loss %.4f val_f1 %.3f\n", r.epoch, r.train_loss,
                  r.validation.f1);
    err << buf;
  });

  fs::create_directories(o.out);
  const fs::path ckpt = fs::path(o.out) / (o.model + ".ckpt");
  save_checkpoint(ckpt, model, result.best_epoch);
  write_text(fs::path(o.out) / (o.model + "_history.csv"), history_csv(result));
  out << "checkpoint " << ckpt.string() << " (best epoch " << result.best_epoch << ")\n";
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream&) {
  const LoadedCheckpoint ckpt = load_checkpoint(o.checkpoint);
  const LoadedDataset data = read_dataset(o.data);
  const std::string name(to_string(ckpt.model.spec().variant));
  const VariantRun run =
      score_model(name, ckpt.model, data.data.test, o.threshold, data.config.radius);
  export_report({{name, run.metrics}}, {{name, run.curve}}, {{name, run.bands}}, o.out);
  out << metrics_table({{name, run.metrics}});
  return kOk;
}

int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  CompareConfig cc;
  cc.train = train_config(o);
  if (!o.models.empty()) cc.variants = parse_variant_list(o.models);
  cc.init = parse_init_mode(o.init);
  const LoadedDataset data = read_dataset(o.data);
  cc.base = base_spec(o, data);
  cc.u_visual = o.u_visual;
  cc.u_seismic = o.u_seismic;
  cc.radius = data.config.radius;
  cc.log = [&](const std::string& line) { err << line << '\n'; };
  if (!(cc.u_visual >= 0 && cc.u_visual <= 1) || !(cc.u_seismic >= 0 && cc.u_seismic <= 1))
    throw UsageError("Dempster-Shafer uncertainties must lie in [0, 1]");

  const CompareResult result = compare(data.data, cc);
  std::vector<ModelMetrics> rows;
  std::vector<ModelCurve> curves;
  std::vector<ModelBands> bands;
  for (const VariantRun& r : result.runs) {
    rows.push_back({r.name, r.metrics});
    curves.push_back({r.name, r.curve});
    bands.push_back({r.name, r.bands});
  }
  if (!o.out.empty()) export_report(rows, curves, bands, o.out);
  out << metrics_table(rows);
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream&) {
  constexpr double kTolerance = 1e-4;
  bool ok = true;
  char buf[200];
  for (Variant v : kAllVariants) {
    const VariantCheck check = gradcheck_variant(v, o.seed, o.samples);
    for (const ParameterCheck& p : check.parameters) {
      const bool pass = p.result.passed(kTolerance);
      ok = ok && pass;
      std::snprintf(buf, sizeof buf, "%-18s %-24s max_rel_error %.3e %s\n",
                    std::string(to_string(v)).c_str(), p.parameter.c_str(),
                    p.result.max_rel_error, pass ? "ok" : "FAIL");
      out << buf;
    }
  }
  if (!ok) throw VerificationFailure("gradient check exceeded relative error 1e-4");
  return kOk;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::stringstream ss(text);
  int number = 0;
  for (std::string line; std::getline(ss, line);) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config line " + std::to_string(number) + ": empty key or value");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Order-preserving bilinear fusion of seismic and visual sensor data"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto* gen = app.add_subcommand("gen-data", "simulate a sensor field and write a dataset");
  gen->add_option("--out", o.out, "dataset directory")->required();
  gen->add_option("--train", o.n_train, "training windows")->check(CLI::NonNegativeNumber);
  gen->add_option("--test", o.n_test, "test windows")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", o.seed, "simulation seed");
  gen->add_option("--radius", o.field.radius, "positive-label radius (m)");
  gen->add_option("--field-size", o.field.field_size, "field side length (m)");
  gen->add_option("--session-seconds", o.field.session_seconds, "walk length per session");
  gen->add_option("--visual-noise", o.field.visual_noise, "optical-flow pixel noise");
  gen->add_option("--seismic-noise", o.field.seismic_noise, "seismic white noise level");
  gen->add_option("--occlusion-rate", o.field.occlusion_rate, "windows with a hidden walker");
  gen->add_option("--clutter-rate", o.field.clutter_rate, "windows with a spurious mover");
  gen->add_option("--burst-rate", o.field.burst_rate, "windows with a foreign seismic event");

  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "dataset directory")->required();
    sub->add_option("--epochs", o.epochs, "training epochs")->check(CLI::NonNegativeNumber);
    sub->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
    sub->add_option("--l1", o.l1, "l1 weight on reduction layers")->check(CLI::NonNegativeNumber);
    sub->add_option("--batch", o.batch, "mini-batch size")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "initialisation and shuffle seed");
    sub->add_option("--threshold", o.threshold, "decision threshold")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--validation-fraction", o.validation_fraction, "held-out share of train");
  };

  auto* trn = app.add_subcommand("train", "train one model variant");
  add_training(trn);
  trn->add_option("--out", o.out, "output directory")->required();
  trn->add_option("--model", o.model, "model variant");
  trn->add_option("--init", o.init, "random | from-checkpoints");
  trn->add_option("--visual-checkpoint", o.visual_checkpoint, "visual-only checkpoint");
  trn->add_option("--seismic-checkpoint", o.seismic_checkpoint, "seismic-only checkpoint");

  auto* evl = app.add_subcommand("eval", "score a checkpoint on the test split");
  evl->add_option("--data", o.data, "dataset directory")->required();
  evl->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  evl->add_option("--out", o.out, "report directory")->required();
  evl->add_option("--threshold", o.threshold, "decision threshold")->check(CLI::Range(0.0, 1.0));

  auto* cmp = app.add_subcommand("compare", "train and score every variant plus late fusion");
  add_training(cmp);
  cmp->add_option("--out", o.out, "report directory");
  cmp->add_option("--models", o.models, "comma-separated variants (default all)");
  o.init = "from-checkpoints";
  cmp->add_option("--init", o.init, "random | from-checkpoints");
  cmp->add_option("--ds-uncertainty-visual", o.u_visual, "Dempster-Shafer visual uncertainty");
  cmp->add_option("--ds-uncertainty-seismic", o.u_seismic, "Dempster-Shafer seismic uncertainty");

  auto* grd = app.add_subcommand("gradcheck", "finite-difference check of every parameter");
  grd->add_option("--seed", o.seed, "sample seed");
  grd->add_option("--samples", o.samples, "samples per variant")->check(CLI::PositiveNumber);

  std::vector<std::string> args;
  try {
    args = merge_config(raw_args);
  } catch (const std::system_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  // The train command defaults to random init; compare to pretrained streams.
  if (!args.empty() && args[0] == "train") o.init = "random";
  trn->get_option("--init")->default_str(o.init);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  out << "effective-config: " << effective_config(*sub) << '\n';
  try {
    if (sub == gen) return cmd_gen_data(o, out, err);
    if (sub == trn) return cmd_train(o, out, err);
    if (sub == evl) return cmd_eval(o, out, err);
    if (sub == cmp) return cmd_compare(o, out, err);
    return cmd_gradcheck(o, out, err);
  } catch (const VerificationFailure& e) {
    err << "verification failed: " << e.what() << '\n';
    return kVerification;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << '\n';
    return kVerification;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ReportError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace opbil::cli
