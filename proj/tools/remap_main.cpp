#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "remap/body.hpp"
#include "remap/errors.hpp"
#include "remap/eval.hpp"
#include "remap/io.hpp"
#include "remap/pairing.hpp"
#include "remap/prior.hpp"
#include "remap/retarget.hpp"

using namespace remap;

namespace {

// Exit classes: 0 ok, 2 usage, 3 bad input or config, 4 numeric failure.
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumeric = 4;

std::string resolve_out(const std::string& flag, const char* fallback) {
  if (!flag.empty()) return flag;
  return default_out_dir() + "/" + fallback;
}

nlohmann::json input_entry(const std::string& path) {
  return {{"path", path}, {"fnv1a64", hash_hex(fnv1a64_file(path))}};
}

// One manifest beside every artifact: enough to rerun the command and get
// the same bytes back. No timestamps, so reruns rewrite it identically.
void write_manifest(const std::string& artifact, const std::string& subcommand,
                    const nlohmann::json& config, const nlohmann::json& inputs,
                    const nlohmann::json& outputs) {
  const nlohmann::json manifest = {{"tool", "remap"},
                                   {"version", std::string(kToolVersion)},
                                   {"subcommand", subcommand},
                                   {"config", config},
                                   {"inputs", inputs},
                                   {"outputs", outputs}};
  write_file(artifact + ".manifest.json", manifest.dump(1) + "\n");
}

void write_theta_file(const std::string& path, const ThetaSearchResult& result) {
  nlohmann::json per_link = nlohmann::json::object();
  for (const auto& [link, scale] : result.theta.per_link) per_link[link] = scale;
  const nlohmann::json j = {{"s", result.theta.s},
                            {"t", {result.theta.t[0], result.theta.t[1], result.theta.t[2]}},
                            {"per_link", per_link},
                            {"error", result.error},
                            {"best_trial", result.best_trial}};
  write_file(path, j.dump(1) + "\n");
}

ScaleTheta read_theta_file(const std::string& path) {
  ScaleTheta theta;
  try {
    const nlohmann::json j = nlohmann::json::parse(read_file(path));
    theta.s = j.at("s").get<double>();
    const auto& t = j.at("t");
    if (!t.is_array() || t.size() != 3) throw ConfigError(path + ": field t must be [x, y, z]");
    for (int c = 0; c < 3; ++c) theta.t[c] = t[c].get<double>();
    if (j.contains("per_link")) {
      for (const auto& [link, scale] : j.at("per_link").items()) {
        theta.per_link[link] = scale.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": not a theta file: " + e.what());
  }
  return theta;
}

nlohmann::json theta_json(const ScaleTheta& theta) {
  nlohmann::json per_link = nlohmann::json::object();
  for (const auto& [link, scale] : theta.per_link) per_link[link] = scale;
  return {{"s", theta.s}, {"t", {theta.t[0], theta.t[1], theta.t[2]}}, {"per_link", per_link}};
}

struct GenCorpusOpts {
  std::string body, out;
  int count = 1000;
  int rank = 8;
  double noise = 0.05;
  uint64_t seed = 1;
  bool rom = false;
};

int run_gen_corpus(const GenCorpusOpts& o) {
  const ReferenceBody body = load_body(o.body);
  const std::string out = resolve_out(o.out, "corpus.txt");
  const std::vector<HumanPose> corpus =
      o.rom ? generate_uniform_rom(body, o.count, o.seed)
            : generate_corpus(body, o.count, o.rank, o.seed, o.noise);
  write_corpus(out, corpus, body.k());
  write_manifest(out, "gen-corpus",
                 {{"count", o.count},
                  {"rank", o.rank},
                  {"noise", o.noise},
                  {"seed", o.seed},
                  {"rom", o.rom}},
                 {{"body", input_entry(o.body)}}, {{"corpus", out}});
  std::cout << "wrote " << corpus.size() << " poses (k=" << body.k() << ") to " << out << "\n";
  return 0;
}

struct TrainPriorOpts {
  std::string corpus, body, out;
  PriorTrainConfig cfg;
};

int run_train_prior(const TrainPriorOpts& o) {
  const std::vector<HumanPose> corpus = read_corpus(o.corpus);
  if (!o.body.empty()) {
    const ReferenceBody body = load_body(o.body);
    if (!corpus.empty() && corpus.front().cols() != body.k()) {
      throw ConfigError("corpus body size disagrees with " + o.body);
    }
  }
  const std::string out = resolve_out(o.out, "prior.json");
  const PriorModel prior = train_prior(corpus, o.cfg);
  save_prior(out, prior);

  nlohmann::json inputs = {{"corpus", input_entry(o.corpus)}};
  if (!o.body.empty()) inputs["body"] = input_entry(o.body);
  write_manifest(out, "train-prior",
                 {{"latent", o.cfg.latent_dim},
                  {"hidden", o.cfg.hidden},
                  {"beta", o.cfg.beta},
                  {"epochs", o.cfg.epochs},
                  {"batch", o.cfg.batch},
                  {"lr", o.cfg.lr},
                  {"weight_decay", o.cfg.weight_decay},
                  {"val_fraction", o.cfg.val_fraction},
                  {"seed", o.cfg.seed}},
                 inputs, {{"prior", out}});
  std::cout << "trained prior k=" << prior.k << " d=" << prior.d
            << " val_mse=" << format_double(prior.val_mse)
            << " hash=" << hash_hex(prior_weights_hash(prior)) << "\n"
            << "wrote " << out << "\n";
  return 0;
}

struct SearchThetaOpts {
  std::string calibration, profile, prior, body, out;
  int trials = 200;
  uint64_t seed = 1;
  std::vector<double> t_min{-0.5, -0.5, -0.5};
  std::vector<double> t_max{0.5, 0.5, 0.5};
  double s_min = 0.5;
  double s_max = 4.0;
  std::string ik_route = "analytic";
  int ik_iters = 300;
};

int run_search_theta(const SearchThetaOpts& o) {
  const RobotProfile profile = load_profile(o.profile);
  const PriorModel prior = load_prior(o.prior);
  const ReferenceBody body = load_body(o.body);
  const std::vector<CalibrationPair> calibration = read_calibration(o.calibration);

  ThetaRanges ranges;
  ranges.s_min = o.s_min;
  ranges.s_max = o.s_max;
  for (int c = 0; c < 3; ++c) {
    ranges.t_min[c] = o.t_min[c];
    ranges.t_max[c] = o.t_max[c];
  }
  IkConfig ik;
  ik.route = ik_route_from_name(o.ik_route);
  ik.max_iters = o.ik_iters;

  const std::string out = resolve_out(o.out, "theta.json");
  const ThetaSearchResult result =
      search_theta(calibration, profile, prior, body, ranges, o.trials, o.seed, ik);
  write_theta_file(out, result);
  write_manifest(out, "search-theta",
                 {{"trials", o.trials},
                  {"seed", o.seed},
                  {"s_min", o.s_min},
                  {"s_max", o.s_max},
                  {"t_min", o.t_min},
                  {"t_max", o.t_max},
                  {"ik_route", o.ik_route},
                  {"ik_iters", o.ik_iters}},
                 {{"calibration", input_entry(o.calibration)},
                  {"profile", input_entry(o.profile)},
                  {"prior", input_entry(o.prior)},
                  {"body", input_entry(o.body)}},
                 {{"theta", out}});
  std::cout << "best theta s=" << format_double(result.theta.s) << " t=["
            << format_double(result.theta.t[0]) << ", " << format_double(result.theta.t[1])
            << ", " << format_double(result.theta.t[2])
            << "] error_m=" << format_double(result.error) << " trial=" << result.best_trial
            << "\n"
            << "wrote " << out << "\n";
  return 0;
}

struct PairOpts {
  std::string profile, prior, body, theta_file, out;
  int count = 1000;
  uint64_t seed = 1;
  int workers = 0;
  std::string ik_route = "analytic";
  int ik_iters = 300;
};

int run_pair(const PairOpts& o) {
  const RobotProfile profile = load_profile(o.profile);
  const PriorModel prior = load_prior(o.prior);
  const ReferenceBody body = load_body(o.body);
  const ScaleTheta theta = o.theta_file.empty() ? profile.theta : read_theta_file(o.theta_file);

  PairingConfig cfg;
  cfg.workers = o.workers;
  cfg.ik.route = ik_route_from_name(o.ik_route);
  cfg.ik.max_iters = o.ik_iters;

  const std::string out = resolve_out(o.out, "dataset.txt");
  const PairedDataset ds = generate_pairs(profile, prior, body, theta, o.count, o.seed, cfg);
  write_dataset(out, ds);

  nlohmann::json inputs = {{"profile", input_entry(o.profile)},
                           {"prior", input_entry(o.prior)},
                           {"body", input_entry(o.body)}};
  if (!o.theta_file.empty()) inputs["theta"] = input_entry(o.theta_file);
  write_manifest(out, "pair",
                 {{"count", o.count},
                  {"seed", o.seed},
                  {"workers", o.workers},
                  {"ik_route", o.ik_route},
                  {"ik_iters", o.ik_iters},
                  {"theta", theta_json(theta)}},
                 inputs, {{"dataset", out}});

  int converged = 0;
  for (const auto& s : ds.samples) converged += s.ik_residual <= cfg.ik.converge_residual;
  std::cout << "wrote " << ds.samples.size() << " pairs to " << out << " (ik converged "
            << converged << "/" << ds.samples.size() << ")\n";
  return 0;
}

struct FilterOpts {
  std::string dataset, out;
  double residual_cap = 0.10;
};

int run_filter(const FilterOpts& o) {
  const PairedDataset ds = read_dataset(o.dataset);
  const std::string out = resolve_out(o.out, "filtered.txt");
  const FilterResult result = filter_extreme(ds, ds.phis(), o.residual_cap);
  write_dataset(out, result.kept);
  write_manifest(out, "filter", {{"residual_cap", o.residual_cap}},
                 {{"dataset", input_entry(o.dataset)}}, {{"dataset", out}});
  std::cout << "tau=" << format_double(result.tau) << " kept=" << result.kept.samples.size()
            << "/" << ds.samples.size() << " removed_by_phi=" << result.removed_by_phi
            << " removed_by_residual=" << result.removed_by_residual
            << " removed_fraction=" << format_double(result.removed_fraction) << "\n"
            << "wrote " << out << "\n";
  return 0;
}

struct TrainOpts {
  std::string dataset, profile, out;
  RetargetConfig cfg;
  bool uniform_sampling = false;
};

int run_train(const TrainOpts& o) {
  const PairedDataset ds = read_dataset(o.dataset);
  const RobotProfile profile = load_profile(o.profile);
  RetargetConfig cfg = o.cfg;
  cfg.weighted_sampling = !o.uniform_sampling;

  const std::string out = resolve_out(o.out, "retarget.json");
  TrainLog log;
  const RetargetModel model = train_retarget(ds, profile, cfg, &log);
  save_retarget(out, model);
  write_manifest(out, "train",
                 {{"epochs", cfg.epochs},
                  {"batch", cfg.batch},
                  {"hidden", cfg.hidden},
                  {"lr", cfg.lr},
                  {"weight_decay", cfg.weight_decay},
                  {"val_fraction", cfg.val_fraction},
                  {"seed", cfg.seed},
                  {"weighted_sampling", cfg.weighted_sampling},
                  {"steps_per_epoch", cfg.steps_per_epoch}},
                 {{"dataset", input_entry(o.dataset)}, {"profile", input_entry(o.profile)}},
                 {{"model", out}});

  for (const auto& e : log.epochs) {
    std::cout << "epoch " << e.epoch << " l_pre=" << format_double(e.l_pre)
              << " l_post=" << format_double(e.l_post)
              << " l_total=" << format_double(e.l_total)
              << " val_link_cm=" << format_double(e.val_link_error) << "\n";
  }
  std::cout << "train=" << log.train_count << " val=" << log.val_count
            << " steps=" << log.total_steps << " best_epoch=" << log.best_epoch
            << " best_val_link_cm=" << format_double(log.best_val_link_error) << "\n"
            << "wrote " << out << " hash=" << hash_hex(retarget_weights_hash(model)) << "\n";
  if (log.aborted) {
    std::cerr << "training aborted on a non-finite loss; checkpoint holds the last good weights\n";
    return kExitNumeric;
  }
  return 0;
}

struct EvalOpts {
  std::string model, dataset, profile, out;
};

int run_eval(const EvalOpts& o) {
  const RetargetModel model = load_retarget(o.model);
  const PairedDataset ds = read_dataset(o.dataset);
  const RobotProfile profile = load_profile(o.profile);

  const std::string out = resolve_out(o.out, "report.json");
  const EvalReport report = evaluate_model(model, ds, profile);
  const std::string json = report_json(report);
  write_file(out, json);
  write_manifest(out, "eval", nlohmann::json::object(),
                 {{"model", input_entry(o.model)},
                  {"dataset", input_entry(o.dataset)},
                  {"profile", input_entry(o.profile)}},
                 {{"report", out}});
  std::cout << json;
  return 0;
}

struct AblateOpts {
  std::string dataset, profile, prior, out;
  std::vector<uint64_t> seeds{1, 2, 3};
  RetargetConfig train;
  double held_out_fraction = 0.1;
  double residual_cap = 0.10;
};

int run_ablate(const AblateOpts& o) {
  const PairedDataset ds = read_dataset(o.dataset);
  const RobotProfile profile = load_profile(o.profile);
  const PriorModel prior = load_prior(o.prior);

  AblationConfig cfg;
  cfg.train = o.train;
  cfg.seeds = o.seeds;
  cfg.held_out_fraction = o.held_out_fraction;
  cfg.residual_cap = o.residual_cap;

  const std::string out = resolve_out(o.out, "ablation.csv");
  const AblationTable table = run_ablation(ds, profile, prior, cfg);
  write_file(out, ablation_csv(table));
  write_manifest(out, "ablate",
                 {{"seeds", o.seeds},
                  {"epochs", o.train.epochs},
                  {"batch", o.train.batch},
                  {"hidden", o.train.hidden},
                  {"lr", o.train.lr},
                  {"weight_decay", o.train.weight_decay},
                  {"val_fraction", o.train.val_fraction},
                  {"held_out_fraction", o.held_out_fraction},
                  {"residual_cap", o.residual_cap}},
                 {{"dataset", input_entry(o.dataset)},
                  {"profile", input_entry(o.profile)},
                  {"prior", input_entry(o.prior)}},
                 {{"table", out}});
  for (const char* variant : {"proposed", "no_filter", "one_stage"}) {
    std::cout << variant << " median_link_cm=" << format_double(table.median_link_cm(variant))
              << "\n";
  }
  std::cout << "held_out=" << table.held_out << " tau=" << format_double(table.tau) << "\n"
            << "wrote " << out << "\n";
  return 0;
}

struct RetargetOpts {
  std::string model, poses, out;
};

int run_retarget(const RetargetOpts& o) {
  const RetargetModel model = load_retarget(o.model);
  const std::string out = resolve_out(o.out, "motion.txt");
  const size_t frames = retarget_stream(model, o.poses, out);
  write_manifest(out, "retarget", nlohmann::json::object(),
                 {{"model", input_entry(o.model)}, {"poses", input_entry(o.poses)}},
                 {{"motion", out}});
  std::cout << "wrote " << frames << " frames to " << out << "\n";
  return 0;
}

struct VerifyOpts {
  std::string dataset, profile;
};

int run_verify(const VerifyOpts& o) {
  const PairedDataset ds = read_dataset(o.dataset);
  const RobotProfile profile = load_profile(o.profile);
  verify_dataset(ds, profile);
  std::cout << "ok: " << ds.samples.size() << " samples, profile "
            << hash_hex(ds.provenance.profile_hash) << ", prior "
            << hash_hex(ds.provenance.prior_hash)
            << (ds.provenance.tau < 0 ? ", raw" : ", filtered") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion retargeting pipeline: pose corpus, body prior, paired data, training"};
  app.require_subcommand(1);
  std::function<int()> runner;

  GenCorpusOpts gen;
  CLI::App* sub = app.add_subcommand("gen-corpus", "Sample a synthetic pose corpus for a body");
  sub->add_option("--body", gen.body, "reference body JSON")->required();
  sub->add_option("--count", gen.count, "poses to draw");
  sub->add_option("--rank", gen.rank, "rank of the low-rank pose model");
  sub->add_option("--noise", gen.noise, "per-joint angle noise, radians");
  sub->add_option("--seed", gen.seed, "RNG seed");
  sub->add_flag("--rom", gen.rom, "uniform range-of-motion sampling instead of low-rank");
  sub->add_option("-o,--out", gen.out, "output corpus path");
  sub->callback([&] { runner = [&] { return run_gen_corpus(gen); }; });

  TrainPriorOpts prior;
  sub = app.add_subcommand("train-prior", "Train the pose prior on a corpus");
  sub->add_option("--corpus", prior.corpus, "corpus file")->required();
  sub->add_option("--body", prior.body, "reference body JSON, to cross-check sizes");
  sub->add_option("--latent", prior.cfg.latent_dim, "latent dimension");
  sub->add_option("--hidden", prior.cfg.hidden, "hidden width");
  sub->add_option("--beta", prior.cfg.beta, "KL weight");
  sub->add_option("--epochs", prior.cfg.epochs, "training epochs");
  sub->add_option("--batch", prior.cfg.batch, "batch size");
  sub->add_option("--lr", prior.cfg.lr, "learning rate");
  sub->add_option("--weight-decay", prior.cfg.weight_decay, "L2 weight decay");
  sub->add_option("--val-fraction", prior.cfg.val_fraction, "validation split fraction");
  sub->add_option("--seed", prior.cfg.seed, "RNG seed");
  sub->add_option("-o,--out", prior.out, "output checkpoint path");
  sub->callback([&] { runner = [&] { return run_train_prior(prior); }; });

  SearchThetaOpts theta;
  sub = app.add_subcommand("search-theta", "Fit the body-to-robot scale on calibration pairs");
  sub->add_option("--calibration", theta.calibration, "calibration pair file")->required();
  sub->add_option("--profile", theta.profile, "robot profile JSON")->required();
  sub->add_option("--prior", theta.prior, "pose prior checkpoint")->required();
  sub->add_option("--body", theta.body, "reference body JSON")->required();
  sub->add_option("--trials", theta.trials, "random search trials");
  sub->add_option("--seed", theta.seed, "RNG seed");
  sub->add_option("--s-min", theta.s_min, "scale lower bound");
  sub->add_option("--s-max", theta.s_max, "scale upper bound");
  sub->add_option("--t-min", theta.t_min, "offset lower bounds, 3 values")->expected(3);
  sub->add_option("--t-max", theta.t_max, "offset upper bounds, 3 values")->expected(3);
  sub->add_option("--ik-route", theta.ik_route, "latent-fd, pose-fd, or analytic");
  sub->add_option("--ik-iters", theta.ik_iters, "IK iteration cap");
  sub->add_option("-o,--out", theta.out, "output theta path");
  sub->callback([&] { runner = [&] { return run_search_theta(theta); }; });

  PairOpts pair;
  sub = app.add_subcommand("pair", "Generate paired robot and human poses");
  sub->add_option("--profile", pair.profile, "robot profile JSON")->required();
  sub->add_option("--prior", pair.prior, "pose prior checkpoint")->required();
  sub->add_option("--body", pair.body, "reference body JSON")->required();
  sub->add_option("--count", pair.count, "pairs to generate");
  sub->add_option("--seed", pair.seed, "base RNG seed");
  sub->add_option("--workers", pair.workers, "worker threads, 0 for the library default");
  sub->add_option("--ik-route", pair.ik_route, "latent-fd, pose-fd, or analytic");
  sub->add_option("--ik-iters", pair.ik_iters, "IK iteration cap");
  sub->add_option("--theta", pair.theta_file, "theta JSON overriding the profile's calibration");
  sub->add_option("-o,--out", pair.out, "output dataset path");
  sub->callback([&] { runner = [&] { return run_pair(pair); }; });

  FilterOpts filter;
  sub = app.add_subcommand("filter", "Drop extreme poses by reconstruction error");
  sub->add_option("--dataset", filter.dataset, "paired dataset file")->required();
  sub->add_option("--residual-cap", filter.residual_cap, "IK residual cap, meters");
  sub->add_option("-o,--out", filter.out, "output dataset path");
  sub->callback([&] { runner = [&] { return run_filter(filter); }; });

  TrainOpts train;
  sub = app.add_subcommand("train", "Train the two-stage retargeting network");
  sub->add_option("--dataset", train.dataset, "paired dataset file")->required();
  sub->add_option("--profile", train.profile, "robot profile JSON")->required();
  sub->add_option("--epochs", train.cfg.epochs, "training epochs");
  sub->add_option("--batch", train.cfg.batch, "batch size");
  sub->add_option("--hidden", train.cfg.hidden, "hidden width of both stages");
  sub->add_option("--lr", train.cfg.lr, "learning rate");
  sub->add_option("--weight-decay", train.cfg.weight_decay, "L2 weight decay");
  sub->add_option("--val-fraction", train.cfg.val_fraction, "validation split fraction");
  sub->add_option("--seed", train.cfg.seed, "RNG seed");
  sub->add_option("--steps-per-epoch", train.cfg.steps_per_epoch,
                  "optimizer steps per epoch, 0 to cover the training set");
  sub->add_flag("--uniform-sampling", train.uniform_sampling,
                "plain uniform batches instead of phi-weighted acceptance");
  sub->add_option("-o,--out", train.out, "output checkpoint path");
  sub->callback([&] { runner = [&] { return run_train(train); }; });

  EvalOpts eval;
  sub = app.add_subcommand("eval", "Score a trained model on a held-out dataset");
  sub->add_option("--model", eval.model, "retargeting checkpoint")->required();
  sub->add_option("--dataset", eval.dataset, "held-out paired dataset")->required();
  sub->add_option("--profile", eval.profile, "robot profile JSON")->required();
  sub->add_option("-o,--out", eval.out, "output report path");
  sub->callback([&] { runner = [&] { return run_eval(eval); }; });

  AblateOpts ablate;
  sub = app.add_subcommand("ablate", "Train and score the proposed model and its ablations");
  sub->add_option("--dataset", ablate.dataset, "raw paired dataset")->required();
  sub->add_option("--profile", ablate.profile, "robot profile JSON")->required();
  sub->add_option("--prior", ablate.prior, "pose prior checkpoint")->required();
  sub->add_option("--seeds", ablate.seeds, "training seeds")->expected(-1);
  sub->add_option("--epochs", ablate.train.epochs, "epochs per run");
  sub->add_option("--batch", ablate.train.batch, "batch size");
  sub->add_option("--hidden", ablate.train.hidden, "hidden width");
  sub->add_option("--lr", ablate.train.lr, "learning rate");
  sub->add_option("--held-out-fraction", ablate.held_out_fraction, "common held-out fraction");
  sub->add_option("--residual-cap", ablate.residual_cap, "IK residual cap for the filter");
  sub->add_option("-o,--out", ablate.out, "output CSV path");
  sub->callback([&] { runner = [&] { return run_ablate(ablate); }; });

  RetargetOpts retarget;
  sub = app.add_subcommand("retarget", "Map a human pose stream to robot joints");
  sub->add_option("--model", retarget.model, "retargeting checkpoint")->required();
  sub->add_option("--poses", retarget.poses, "human pose stream, corpus format")->required();
  sub->add_option("-o,--out", retarget.out, "output motion path");
  sub->callback([&] { runner = [&] { return run_retarget(retarget); }; });

  VerifyOpts verify;
  sub = app.add_subcommand("verify", "Re-check a dataset's self-consistency");
  sub->add_option("--dataset", verify.dataset, "paired dataset file")->required();
  sub->add_option("--profile", verify.profile, "robot profile JSON")->required();
  sub->callback([&] { runner = [&] { return run_verify(verify); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    return runner();
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
