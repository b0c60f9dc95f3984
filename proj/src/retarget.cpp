#include "remap/retarget.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "remap/body.hpp"
#include "remap/checkpoint.hpp"
#include "remap/errors.hpp"
#include "remap/eval.hpp"
#include "remap/io.hpp"
#include "remap/rng.hpp"

namespace remap {

namespace {

constexpr uint64_t kValSplitSalt = 0x76616c2d73706c69ULL;

void check_config(const RetargetConfig& cfg) {
  if (cfg.batch < 1 || cfg.epochs < 1 || cfg.hidden < 1) {
    throw ConfigError("retarget: batch, epochs and hidden must be positive");
  }
  if (cfg.lr < 0.0 || cfg.weight_decay < 0.0 || cfg.steps_per_epoch < 0) {
    throw ConfigError("retarget: negative learning rate, decay or step count");
  }
  if (!(cfg.val_fraction > 0.0) || !(cfg.val_fraction < 1.0)) {
    throw ConfigError("retarget: val_fraction must lie in (0, 1)");
  }
}

void check_model_dims(const RetargetModel& model) {
  if (model.k < 1 || model.m < 1 || model.n < 1 || model.f_pre.input_dim != 6 * model.k ||
      model.f_pre.output_dim != 6 * model.m || model.f_post.input_dim != 6 * model.m ||
      model.f_post.output_dim != model.n ||
      static_cast<int>(model.limits.size()) != model.n ||
      static_cast<int>(model.joint_names.size()) != model.n) {
    throw ConfigError("retarget: model dimensions are inconsistent");
  }
}

void check_batch_dims(const RetargetModel& model, const RetargetBatch& batch) {
  const Eigen::Index b = batch.h.cols();
  if (b == 0) throw ConfigError("retarget: empty batch");
  if (batch.h.rows() != 6 * model.k || batch.r.rows() != 6 * model.m ||
      batch.q.rows() != model.n || batch.r.cols() != b || batch.q.cols() != b) {
    throw DomainError("retarget: batch dimensions disagree with the model");
  }
}

}  // namespace

RetargetModel make_retarget_model(const RobotProfile& profile, int k, const RetargetConfig& cfg,
                                  uint64_t seed) {
  check_config(cfg);
  if (k < 1) throw ConfigError("retarget: body joint count must be positive");
  RetargetModel model;
  model.k = k;
  model.m = profile.chain.m();
  model.n = profile.chain.n();
  model.f_pre = make_mlp(6 * k, cfg.hidden, 6 * model.m, Activation::Gelu, derive_seed(seed, 1));
  model.f_post = make_mlp(6 * model.m, cfg.hidden, model.n, Activation::Gelu, derive_seed(seed, 2));
  model.profile_hash = profile.content_hash;
  model.joint_names = profile.chain.q_joint_names();
  model.limits = profile.chain.joint_limits();
  model.config = cfg;
  return model;
}

RetargetPrediction predict(const RetargetModel& model, const HumanPose& h) {
  check_model_dims(model);
  if (h.cols() != model.k) {
    throw DomainError("predict: pose has " + std::to_string(h.cols()) + " joints, model expects " +
                      std::to_string(model.k));
  }
  RetargetPrediction out;
  const Eigen::VectorXd r_flat =
      model.f_pre.forward(Eigen::Map<const Eigen::VectorXd>(h.data(), h.size()));
  out.r = Eigen::Map<const Eigen::Matrix<double, 6, Eigen::Dynamic>>(r_flat.data(), 6, model.m);
  out.q_raw = model.f_post.forward(r_flat);
  out.q = clamp_to_limits(model.limits, out.q_raw);
  return out;
}

RetargetLosses compute_losses(const RetargetModel& model, const RetargetBatch& batch,
                              RetargetGrads* grads) {
  check_model_dims(model);
  check_batch_dims(model, batch);

  Mlp::Trace tr_pre, tr_teacher, tr_student;
  const Eigen::MatrixXd r_hat = model.f_pre.forward(batch.h, tr_pre);
  const Eigen::MatrixXd q_teacher = model.f_post.forward(batch.r, tr_teacher);
  const Eigen::MatrixXd q_student = model.f_post.forward(r_hat, tr_student);

  RetargetLosses losses;
  losses.pre = mse(r_hat, batch.r);
  losses.post = mse(q_teacher, batch.q) + mse(q_student, batch.q);
  losses.total = losses.pre + losses.post;

  if (grads != nullptr) {
    grads->pre = model.f_pre.zero_grads();
    grads->post = model.f_post.zero_grads();
    model.f_post.backward(tr_teacher, mse_gradient(q_teacher, batch.q), grads->post);
    const Eigen::MatrixXd grad_r_student =
        model.f_post.backward(tr_student, mse_gradient(q_student, batch.q), grads->post);
    model.f_pre.backward(tr_pre, mse_gradient(r_hat, batch.r) + grad_r_student, grads->pre);
  }
  return losses;
}

std::vector<char> validation_mask(const PairedDataset& dataset, double fraction) {
  const int count = static_cast<int>(dataset.samples.size());
  if (count < 2) throw ConfigError("validation_mask: need at least 2 samples");
  if (!(fraction > 0.0) || !(fraction < 1.0)) {
    throw ConfigError("validation_mask: fraction must lie in (0, 1)");
  }
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<uint64_t> keys(count);
  for (int i = 0; i < count; ++i) keys[i] = mix64(dataset.samples[i].seed ^ kValSplitSalt);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] > keys[b]; });
  const int val_count = std::clamp(static_cast<int>(std::lround(fraction * count)), 1, count - 1);
  std::vector<char> mask(count, 0);
  for (int i = 0; i < val_count; ++i) mask[order[i]] = 1;
  return mask;
}

namespace {

Eigen::VectorXd flat_h(const PairedSample& s) {
  return Eigen::Map<const Eigen::VectorXd>(s.h.data(), s.h.size());
}

}  // namespace

RetargetModel train_retarget(const PairedDataset& dataset, const RobotProfile& profile,
                             const RetargetConfig& cfg, TrainLog* log) {
  check_config(cfg);
  const int count = static_cast<int>(dataset.samples.size());
  if (count < 2) throw ConfigError("train_retarget: need at least 2 samples");
  if (dataset.provenance.profile_hash != profile.content_hash) {
    throw ConfigError("train_retarget: dataset was generated against a different profile");
  }
  if (dataset.provenance.n != profile.chain.n() || dataset.provenance.m != profile.chain.m()) {
    throw ConfigError("train_retarget: dataset dimensions disagree with the chain");
  }
  const int k = dataset.provenance.k;
  const int m = dataset.provenance.m;
  const int n = dataset.provenance.n;

  const std::vector<char> mask = validation_mask(dataset, cfg.val_fraction);
  PairedDataset train_ds;
  train_ds.provenance = dataset.provenance;
  std::vector<int> val_idx;
  for (int i = 0; i < count; ++i) {
    if (mask[i]) {
      val_idx.push_back(i);
    } else {
      train_ds.samples.push_back(dataset.samples[i]);
    }
  }
  const int train_count = static_cast<int>(train_ds.samples.size());
  const int val_count = static_cast<int>(val_idx.size());

  Eigen::MatrixXd h_train(6 * k, train_count), r_train(6 * m, train_count),
      q_train(n, train_count);
  for (int i = 0; i < train_count; ++i) {
    const PairedSample& s = train_ds.samples[i];
    h_train.col(i) = flat_h(s);
    r_train.col(i) = Eigen::Map<const Eigen::VectorXd>(s.r.data(), s.r.size());
    q_train.col(i) = s.q;
  }

  Eigen::MatrixXd h_val(6 * k, val_count);
  std::vector<Eigen::Matrix3Xd> val_true_pos(val_count);
  for (int i = 0; i < val_count; ++i) {
    const PairedSample& s = dataset.samples[val_idx[i]];
    h_val.col(i) = flat_h(s);
    val_true_pos[i] = forward_kinematics(profile.chain, s.q).p;
  }
  const std::vector<int> key_links = profile.key_link_indices();

  RetargetModel model = make_retarget_model(profile, k, cfg, cfg.seed);
  BatchSampler sampler(train_ds, derive_seed(cfg.seed, 0x7261), cfg.weighted_sampling);
  const int batch = std::min(cfg.batch, train_count);
  const int steps =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : (train_count + batch - 1) / batch;
  MlpAdam adam_pre({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  MlpAdam adam_post({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  TrainLog local;
  TrainLog& out_log = log != nullptr ? *log : local;
  out_log = TrainLog{};
  out_log.train_count = train_count;
  out_log.val_count = val_count;

  // Last-good weights: the best validation epoch so far, or the untouched
  // initialization when training aborts inside the first epoch.
  Mlp best_pre = model.f_pre;
  Mlp best_post = model.f_post;

  RetargetBatch mini;
  mini.h.resize(6 * k, batch);
  mini.r.resize(6 * m, batch);
  mini.q.resize(n, batch);
  RetargetGrads grads;

  for (int epoch = 1; epoch <= cfg.epochs && !out_log.aborted; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    for (int step = 0; step < steps; ++step) {
      const std::vector<int> idx = sampler.next_batch(batch);
      for (int j = 0; j < batch; ++j) {
        mini.h.col(j) = h_train.col(idx[j]);
        mini.r.col(j) = r_train.col(idx[j]);
        mini.q.col(j) = q_train.col(idx[j]);
      }
      const RetargetLosses losses = compute_losses(model, mini, &grads);
      if (!std::isfinite(losses.total)) {
        out_log.aborted = true;
        break;
      }
      adam_pre.step(model.f_pre, grads.pre);
      adam_post.step(model.f_post, grads.post);
      ++out_log.total_steps;
      entry.l_pre += losses.pre;
      entry.l_post += losses.post;
      entry.l_total += losses.total;
    }
    if (out_log.aborted) break;
    entry.l_pre /= steps;
    entry.l_post /= steps;
    entry.l_total /= steps;

    const Eigen::MatrixXd q_val = model.f_post.forward(model.f_pre.forward(h_val));
    double err = 0.0;
    for (int i = 0; i < val_count; ++i) {
      const Eigen::Matrix3Xd pos = forward_kinematics(profile.chain, q_val.col(i)).p;
      double sample_err = 0.0;
      for (int link : key_links) sample_err += (pos.col(link) - val_true_pos[i].col(link)).norm();
      err += sample_err / static_cast<double>(key_links.size());
    }
    entry.val_link_error = 100.0 * err / static_cast<double>(val_count);
    out_log.epochs.push_back(entry);

    if (entry.val_link_error < out_log.best_val_link_error) {
      out_log.best_val_link_error = entry.val_link_error;
      out_log.best_epoch = epoch;
      best_pre = model.f_pre;
      best_post = model.f_post;
    }
  }

  model.f_pre = std::move(best_pre);
  model.f_post = std::move(best_post);
  model.trained = out_log.best_epoch > 0;
  model.best_val_link_error = out_log.best_val_link_error;
  return model;
}

namespace {

nlohmann::json retarget_payload(const RetargetModel& model) {
  nlohmann::json limits = nlohmann::json::array();
  for (const auto& [lo, hi] : model.limits) limits.push_back({lo, hi});
  return {{"k", model.k},
          {"m", model.m},
          {"n", model.n},
          {"profile_hash", hash_hex(model.profile_hash)},
          {"joints", model.joint_names},
          {"limits", limits},
          {"f_pre", mlp_to_json(model.f_pre)},
          {"f_post", mlp_to_json(model.f_post)},
          {"trained", model.trained},
          {"best_val_link_error",
           std::isfinite(model.best_val_link_error) ? nlohmann::json(model.best_val_link_error)
                                                    : nlohmann::json()},
          {"config",
           {{"lr", model.config.lr},
            {"batch", model.config.batch},
            {"weight_decay", model.config.weight_decay},
            {"epochs", model.config.epochs},
            {"hidden", model.config.hidden},
            {"val_fraction", model.config.val_fraction},
            {"seed", model.config.seed},
            {"weighted_sampling", model.config.weighted_sampling},
            {"steps_per_epoch", model.config.steps_per_epoch}}}};
}

}  // namespace

void save_retarget(const std::string& path, const RetargetModel& model) {
  check_model_dims(model);
  write_checkpoint(path, "retarget", retarget_payload(model));
}

RetargetModel load_retarget(const std::string& path) {
  const nlohmann::json payload = read_checkpoint(path, "retarget");
  RetargetModel model;
  try {
    model.k = payload.at("k").get<int>();
    model.m = payload.at("m").get<int>();
    model.n = payload.at("n").get<int>();
    model.profile_hash = parse_u64_hex(payload.at("profile_hash").get<std::string>());
    model.joint_names = payload.at("joints").get<std::vector<std::string>>();
    for (const auto& pair : payload.at("limits")) {
      model.limits.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
    }
    model.f_pre = mlp_from_json(payload.at("f_pre"));
    model.f_post = mlp_from_json(payload.at("f_post"));
    model.trained = payload.at("trained").get<bool>();
    const nlohmann::json& best = payload.at("best_val_link_error");
    model.best_val_link_error =
        best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    const nlohmann::json& cfg = payload.at("config");
    model.config.lr = cfg.at("lr").get<double>();
    model.config.batch = cfg.at("batch").get<int>();
    model.config.weight_decay = cfg.at("weight_decay").get<double>();
    model.config.epochs = cfg.at("epochs").get<int>();
    model.config.hidden = cfg.at("hidden").get<int>();
    model.config.val_fraction = cfg.at("val_fraction").get<double>();
    model.config.seed = cfg.at("seed").get<uint64_t>();
    model.config.weighted_sampling = cfg.at("weighted_sampling").get<bool>();
    model.config.steps_per_epoch = cfg.at("steps_per_epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("retarget checkpoint '" + path + "': " + e.what());
  }
  check_model_dims(model);
  return model;
}

uint64_t retarget_weights_hash(const RetargetModel& model) {
  return fnv1a64(retarget_payload(model).dump());
}

void write_motion(const std::string& path, const MotionFile& motion) {
  const int n = static_cast<int>(motion.joint_names.size());
  if (n < 1) throw ConfigError("write_motion: no joint names");
  std::string out = "# motion v1 n=" + std::to_string(n) +
                    " count=" + std::to_string(motion.frames.size()) + "\n# joints";
  for (const auto& name : motion.joint_names) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigError("write_motion: joint name '" + name + "' is not writable");
    }
    out += ' ';
    out += name;
  }
  out += '\n';
  for (const auto& frame : motion.frames) {
    if (frame.size() != n) throw DomainError("write_motion: frame with wrong joint count");
    for (int i = 0; i < n; ++i) {
      if (i) out += ' ';
      out += format_double(frame[i]);
    }
    out += '\n';
  }
  write_file(path, out);
}

MotionFile read_motion(const std::string& path) {
  const std::string text = read_file(path);
  MotionFile motion;
  int n = -1;
  size_t expected = 0;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = split_ws(line);
    if (line[0] == '#') {
      if (tokens.size() >= 3 && tokens[1] == "motion") {
        if (tokens[2] != "v1" || tokens.size() < 5 || tokens[3].substr(0, 2) != "n=" ||
            tokens[4].substr(0, 6) != "count=") {
          throw IoError("motion '" + path + "': malformed header");
        }
        n = static_cast<int>(parse_u64(tokens[3].substr(2)));
        expected = parse_u64(tokens[4].substr(6));
        if (n < 1) throw IoError("motion '" + path + "': non-positive joint count");
      } else if (tokens.size() >= 2 && tokens[1] == "joints") {
        if (n < 0 || static_cast<int>(tokens.size()) - 2 != n) {
          throw IoError("motion '" + path + "': joint header disagrees with n");
        }
        for (size_t i = 2; i < tokens.size(); ++i) motion.joint_names.emplace_back(tokens[i]);
      } else {
        throw IoError("motion '" + path + "': unknown header line " + std::to_string(line_no));
      }
      continue;
    }
    if (n < 0) throw IoError("motion '" + path + "': frames before the header");
    if (tokens.size() != static_cast<size_t>(n)) {
      throw IoError("motion '" + path + "', line " + std::to_string(line_no) +
                    ": wrong joint count");
    }
    JointVector q(n);
    for (int i = 0; i < n; ++i) q[i] = parse_double(tokens[i]);
    motion.frames.push_back(std::move(q));
  }
  if (n < 0) throw IoError("motion '" + path + "': missing header");
  if (motion.frames.size() != expected) {
    throw IoError("motion '" + path + "': header promises " + std::to_string(expected) +
                  " frames, found " + std::to_string(motion.frames.size()));
  }
  return motion;
}

size_t retarget_stream(const RetargetModel& model, const std::string& poses_path,
                       const std::string& motion_path) {
  check_model_dims(model);
  const std::vector<HumanPose> frames = read_corpus(poses_path);
  MotionFile motion;
  motion.joint_names = model.joint_names;
  motion.frames.reserve(frames.size());
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].cols() != model.k) {
      throw DomainError("retarget_stream: frame " + std::to_string(i) + " has " +
                        std::to_string(frames[i].cols()) + " joints, model expects " +
                        std::to_string(model.k));
    }
    motion.frames.push_back(predict(model, frames[i]).q);
  }
  write_motion(motion_path, motion);
  return motion.frames.size();
}

}  // namespace remap
