#include "remap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "remap/adam.hpp"
#include "remap/errors.hpp"
#include "remap/io.hpp"
#include "remap/rng.hpp"

namespace remap {

double joint_error(const JointVector& q_pred, const JointVector& q_true) {
  if (q_pred.size() != q_true.size() || q_pred.size() == 0) {
    throw DomainError("joint_error: mismatched or empty joint vectors");
  }
  double sum = 0.0;
  for (int i = 0; i < q_pred.size(); ++i) sum += periodic_angle_diff(q_pred[i], q_true[i]);
  return sum / static_cast<double>(q_pred.size());
}

double link_error(const KinematicChain& chain, const RobotProfile& profile,
                  const JointVector& q_pred, const JointVector& q_true) {
  const std::vector<int> key_links = profile.key_link_indices();
  if (key_links.empty()) throw ConfigError("link_error: profile names no key links");
  const Eigen::Matrix3Xd pos_pred = forward_kinematics(chain, q_pred).p;
  const Eigen::Matrix3Xd pos_true = forward_kinematics(chain, q_true).p;
  double sum = 0.0;
  for (int link : key_links) sum += (pos_pred.col(link) - pos_true.col(link)).norm();
  return 100.0 * sum / static_cast<double>(key_links.size());
}

namespace {

// Common metric loop over a dataset, abstracted over how q is predicted so
// the one-stage ablation baseline reuses it.
template <typename PredictFn>
EvalReport score_dataset(const PairedDataset& held_out, const RobotProfile& profile,
                         PredictFn&& predict_q) {
  if (held_out.samples.empty()) throw ConfigError("evaluate: empty dataset");
  EvalReport report;
  report.samples = static_cast<int>(held_out.samples.size());
  report.profile_hash = profile.content_hash;
  report.dataset_prior_hash = held_out.provenance.prior_hash;

  std::vector<double> link_errors;
  link_errors.reserve(held_out.samples.size());
  for (const auto& s : held_out.samples) {
    const JointVector q_pred = predict_q(s.h);
    report.joint_rad += joint_error(q_pred, s.q);
    link_errors.push_back(link_error(profile.chain, profile, q_pred, s.q));
  }
  report.joint_rad /= report.samples;
  report.link_cm =
      std::accumulate(link_errors.begin(), link_errors.end(), 0.0) / report.samples;

  std::sort(link_errors.begin(), link_errors.end());
  auto quantile = [&](double p) {
    const auto rank = static_cast<size_t>(std::ceil(p * report.samples));
    return link_errors[std::min(link_errors.size() - 1, rank == 0 ? 0 : rank - 1)];
  };
  report.link_cm_p50 = quantile(0.5);
  report.link_cm_p90 = quantile(0.9);
  report.link_cm_max = link_errors.back();
  return report;
}

}  // namespace

EvalReport evaluate_model(const RetargetModel& model, const PairedDataset& held_out,
                          const RobotProfile& profile) {
  if (model.profile_hash != profile.content_hash) {
    throw ConfigError("evaluate_model: model was trained against a different profile");
  }
  if (held_out.provenance.k != model.k) {
    throw ConfigError("evaluate_model: dataset body size disagrees with the model");
  }
  EvalReport report = score_dataset(
      held_out, profile, [&](const HumanPose& h) { return predict(model, h).q_raw; });
  report.model_hash = retarget_weights_hash(model);
  return report;
}

std::string report_json(const EvalReport& report) {
  const nlohmann::json j = {{"samples", report.samples},
                            {"joint_rad", report.joint_rad},
                            {"link_cm", report.link_cm},
                            {"link_cm_p50", report.link_cm_p50},
                            {"link_cm_p90", report.link_cm_p90},
                            {"link_cm_max", report.link_cm_max},
                            {"profile_hash", hash_hex(report.profile_hash)},
                            {"model_hash", hash_hex(report.model_hash)},
                            {"dataset_prior_hash", hash_hex(report.dataset_prior_hash)}};
  return j.dump(1) + "\n";
}

std::vector<double> AblationTable::link_cm_for(const std::string& variant) const {
  std::vector<double> out;
  for (const auto& row : rows) {
    if (row.variant == variant) out.push_back(row.link_cm);
  }
  return out;
}

double AblationTable::median_link_cm(const std::string& variant) const {
  std::vector<double> values = link_cm_for(variant);
  if (values.empty()) throw ConfigError("ablation table has no variant '" + variant + "'");
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

constexpr uint64_t kHeldOutSalt = 0x68656c642d6f7574ULL;

// One-stage baseline: a single MLP straight from the flattened human pose
// to joint angles, trained with the same sampler, optimizer and
// best-validation selection as the two-stage model.
struct OneStageResult {
  Mlp net;
  int iterations = 0;
};

OneStageResult train_one_stage(const PairedDataset& dataset, const RobotProfile& profile,
                               const RetargetConfig& cfg) {
  const int count = static_cast<int>(dataset.samples.size());
  if (count < 2) throw ConfigError("train_one_stage: need at least 2 samples");
  const int k = dataset.provenance.k;
  const int n = profile.chain.n();

  const std::vector<char> is_val = validation_mask(dataset, cfg.val_fraction);

  PairedDataset train_ds;
  train_ds.provenance = dataset.provenance;
  std::vector<int> val_idx;
  for (int i = 0; i < count; ++i) {
    if (is_val[i]) {
      val_idx.push_back(i);
    } else {
      train_ds.samples.push_back(dataset.samples[i]);
    }
  }
  const int train_count = static_cast<int>(train_ds.samples.size());
  const int val_count = static_cast<int>(val_idx.size());

  Eigen::MatrixXd h_train(6 * k, train_count), q_train(n, train_count);
  for (int i = 0; i < train_count; ++i) {
    const PairedSample& s = train_ds.samples[i];
    h_train.col(i) = Eigen::Map<const Eigen::VectorXd>(s.h.data(), s.h.size());
    q_train.col(i) = s.q;
  }
  Eigen::MatrixXd h_val(6 * k, val_count);
  std::vector<Eigen::Matrix3Xd> val_true_pos(val_count);
  for (int i = 0; i < val_count; ++i) {
    const PairedSample& s = dataset.samples[val_idx[i]];
    h_val.col(i) = Eigen::Map<const Eigen::VectorXd>(s.h.data(), s.h.size());
    val_true_pos[i] = forward_kinematics(profile.chain, s.q).p;
  }
  const std::vector<int> key_links = profile.key_link_indices();

  OneStageResult result;
  result.net = make_mlp(6 * k, cfg.hidden, n, Activation::Gelu, derive_seed(cfg.seed, 3));
  BatchSampler sampler(train_ds, derive_seed(cfg.seed, 0x7261), cfg.weighted_sampling);
  const int batch = std::min(cfg.batch, train_count);
  const int steps =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : (train_count + batch - 1) / batch;
  MlpAdam adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  Mlp best = result.net;
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd hb(6 * k, batch), qb(n, batch);
  bool aborted = false;

  for (int epoch = 1; epoch <= cfg.epochs && !aborted; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      const std::vector<int> idx = sampler.next_batch(batch);
      for (int j = 0; j < batch; ++j) {
        hb.col(j) = h_train.col(idx[j]);
        qb.col(j) = q_train.col(idx[j]);
      }
      Mlp::Trace trace;
      const Eigen::MatrixXd q_hat = result.net.forward(hb, trace);
      if (!std::isfinite(mse(q_hat, qb))) {
        aborted = true;
        break;
      }
      MlpGrads grads = result.net.zero_grads();
      result.net.backward(trace, mse_gradient(q_hat, qb), grads);
      adam.step(result.net, grads);
      ++result.iterations;
    }
    if (aborted) break;
    const Eigen::MatrixXd q_val = result.net.forward(h_val);
    double err = 0.0;
    for (int i = 0; i < val_count; ++i) {
      const Eigen::Matrix3Xd pos = forward_kinematics(profile.chain, q_val.col(i)).p;
      double sample_err = 0.0;
      for (int link : key_links) sample_err += (pos.col(link) - val_true_pos[i].col(link)).norm();
      err += sample_err / static_cast<double>(key_links.size());
    }
    err = 100.0 * err / static_cast<double>(val_count);
    if (err < best_val) {
      best_val = err;
      best = result.net;
    }
  }
  result.net = std::move(best);
  return result;
}

}  // namespace

AblationTable run_ablation(const PairedDataset& raw, const RobotProfile& profile,
                           const PriorModel& prior, const AblationConfig& cfg) {
  if (raw.provenance.tau >= 0.0) {
    throw ConfigError("run_ablation: expected a raw dataset, got a filtered one");
  }
  if (raw.provenance.prior_hash != prior_weights_hash(prior)) {
    throw ConfigError("run_ablation: dataset was generated under a different prior");
  }
  if (cfg.seeds.empty()) throw ConfigError("run_ablation: no seeds");
  const int count = static_cast<int>(raw.samples.size());
  if (count < 10) throw ConfigError("run_ablation: dataset too small");

  // One common held-out split, carved off before filtering so no variant
  // ever trains on it.
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<uint64_t> keys(count);
  for (int i = 0; i < count; ++i) keys[i] = mix64(raw.samples[i].seed ^ kHeldOutSalt);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] > keys[b]; });
  const int held_count =
      std::clamp(static_cast<int>(std::lround(cfg.held_out_fraction * count)), 1, count - 1);
  std::vector<char> held_mask(count, 0);
  for (int i = 0; i < held_count; ++i) held_mask[order[i]] = 1;

  PairedDataset held, pool;
  held.provenance = raw.provenance;
  pool.provenance = raw.provenance;
  for (int i = 0; i < count; ++i) {
    (held_mask[i] ? held : pool).samples.push_back(raw.samples[i]);
  }

  const FilterResult filtered = filter_extreme(pool, pool.phis(), cfg.residual_cap);

  AblationTable table;
  table.held_out = held_count;
  table.tau = filtered.tau;

  std::vector<AblationRow> no_filter_rows, one_stage_rows;
  for (uint64_t seed : cfg.seeds) {
    RetargetConfig train_cfg = cfg.train;
    train_cfg.seed = seed;

    TrainLog log_proposed;
    const RetargetModel proposed =
        train_retarget(filtered.kept, profile, train_cfg, &log_proposed);
    const EvalReport report_proposed = evaluate_model(proposed, held, profile);
    table.rows.push_back({"proposed", seed, report_proposed.joint_rad, report_proposed.link_cm,
                          log_proposed.total_steps});

    // Raw data sees the same number of optimizer steps as the filtered
    // run, pinned per epoch; dropping the filter also drops the
    // phi-weighted batch sampling (both belong to the filtering component).
    RetargetConfig raw_cfg = train_cfg;
    raw_cfg.steps_per_epoch = std::max(1, log_proposed.total_steps / train_cfg.epochs);
    raw_cfg.weighted_sampling = false;
    TrainLog log_raw;
    const RetargetModel no_filter = train_retarget(pool, profile, raw_cfg, &log_raw);
    const EvalReport report_raw = evaluate_model(no_filter, held, profile);
    no_filter_rows.push_back(
        {"no_filter", seed, report_raw.joint_rad, report_raw.link_cm, log_raw.total_steps});

    const OneStageResult one_stage = train_one_stage(filtered.kept, profile, train_cfg);
    const EvalReport report_one = score_dataset(held, profile, [&](const HumanPose& h) {
      return JointVector(one_stage.net.forward(
          Eigen::Map<const Eigen::VectorXd>(h.data(), h.size())));
    });
    one_stage_rows.push_back(
        {"one_stage", seed, report_one.joint_rad, report_one.link_cm, one_stage.iterations});
  }
  table.rows.insert(table.rows.end(), no_filter_rows.begin(), no_filter_rows.end());
  table.rows.insert(table.rows.end(), one_stage_rows.begin(), one_stage_rows.end());
  return table;
}

std::string ablation_csv(const AblationTable& table) {
  std::string out = "variant,seed,joint_rad,link_cm,iterations\n";
  for (const auto& row : table.rows) {
    out += row.variant + "," + std::to_string(row.seed) + "," + format_double(row.joint_rad) +
           "," + format_double(row.link_cm) + "," + std::to_string(row.iterations) + "\n";
  }
  return out;
}

}  // namespace remap
