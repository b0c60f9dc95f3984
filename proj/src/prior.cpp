#include "remap/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "remap/checkpoint.hpp"
#include "remap/errors.hpp"
#include "remap/io.hpp"
#include "remap/rng.hpp"

namespace remap {

namespace {

void require_trained(const PriorModel& prior, const char* op) {
  if (!prior.trained) {
    throw ConfigError(std::string(op) + ": the prior has not been trained");
  }
}

// Validation membership is a pure function of (seed, index), so the split
// is stable no matter how the corpus is batched.
bool is_validation(uint64_t seed, size_t index, double fraction) {
  return (derive_seed(seed ^ 0x76a1c97300e0d1b3ULL, index) % 10000) <
         static_cast<uint64_t>(fraction * 10000.0);
}

double kl_divergence(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar) {
  // mean over batch of sum over dims of 0.5 (e^lv + mu^2 - 1 - lv)
  const double total =
      0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
  return total / static_cast<double>(mu.cols());
}

}  // namespace

PriorModel make_untrained_prior(int k, const PriorTrainConfig& cfg) {
  if (k <= 0 || cfg.latent_dim <= 0 || cfg.hidden <= 0) {
    throw ConfigError("prior: k, latent_dim and hidden must be positive");
  }
  PriorModel prior;
  prior.k = k;
  prior.d = cfg.latent_dim;
  prior.beta = cfg.beta;
  prior.config = cfg;
  prior.encoder = make_mlp(6 * k, cfg.hidden, 2 * cfg.latent_dim, cfg.activation,
                           derive_seed(cfg.seed, 0xe5c0de));
  prior.decoder = make_mlp(cfg.latent_dim, cfg.hidden, 6 * k, cfg.activation,
                           derive_seed(cfg.seed, 0xdec0de));
  return prior;
}

PriorModel train_prior(const std::vector<HumanPose>& corpus, const PriorTrainConfig& cfg) {
  if (corpus.empty()) throw ConfigError("train_prior: empty corpus");
  const int k = static_cast<int>(corpus.front().cols());
  if (static_cast<int>(corpus.size()) < 10 * cfg.latent_dim) {
    throw ConfigError("train_prior: corpus smaller than 10x latent_dim");
  }

  std::vector<size_t> train_idx, val_idx;
  for (size_t i = 0; i < corpus.size(); ++i) {
    (is_validation(cfg.seed, i, cfg.val_fraction) ? val_idx : train_idx).push_back(i);
  }
  if (train_idx.empty() || val_idx.empty()) {
    throw ConfigError("train_prior: corpus too small to split");
  }

  Eigen::MatrixXd data(6 * k, corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].cols() != k) throw DomainError("train_prior: inconsistent joint counts");
    data.col(i) = flatten_pose(corpus[i]);
  }
  Eigen::MatrixXd val(6 * k, val_idx.size());
  for (size_t i = 0; i < val_idx.size(); ++i) val.col(i) = data.col(val_idx[i]);

  PriorModel prior = make_untrained_prior(k, cfg);
  const int d = prior.d;
  MlpAdam enc_opt({.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  MlpAdam dec_opt({.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  Rng rng(derive_seed(cfg.seed, 0x7ea17));

  const auto validation_loss = [&](const PriorModel& model, double& out_mse) {
    Eigen::MatrixXd enc = model.encoder.forward(val);
    Eigen::MatrixXd mu = enc.topRows(d);
    Eigen::MatrixXd lv = enc.bottomRows(d);
    Eigen::MatrixXd rec = model.decoder.forward(mu);
    out_mse = mse(rec, val);
    return out_mse + cfg.beta * kl_divergence(mu, lv);
  };

  PriorModel best = prior;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<size_t> order = train_idx;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's own stream
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    }
    double epoch_rec = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch) {
      const size_t count = std::min<size_t>(cfg.batch, order.size() - start);
      Eigen::MatrixXd x(6 * k, count);
      for (size_t c = 0; c < count; ++c) x.col(c) = data.col(order[start + c]);

      Mlp::Trace enc_trace;
      Eigen::MatrixXd enc_out = prior.encoder.forward(x, enc_trace);
      Eigen::MatrixXd mu = enc_out.topRows(d);
      Eigen::MatrixXd lv = enc_out.bottomRows(d);

      Eigen::MatrixXd z, eps;
      if (cfg.beta > 0.0) {
        eps.resize(d, count);
        for (int c = 0; c < eps.cols(); ++c) {
          for (int r = 0; r < d; ++r) eps(r, c) = rng.normal();
        }
        z = mu + (0.5 * lv).array().exp().matrix().cwiseProduct(eps);
      } else {
        z = mu;
      }

      Mlp::Trace dec_trace;
      Eigen::MatrixXd rec = prior.decoder.forward(z, dec_trace);
      const double rec_loss = mse(rec, x);
      const double kl = cfg.beta > 0.0 ? kl_divergence(mu, lv) : 0.0;
      const double loss = rec_loss + cfg.beta * kl;
      if (!std::isfinite(loss)) {
        throw NumericError("train_prior: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + " (reconstruction " +
                           format_double(rec_loss) + ", kl " + format_double(kl) + ")");
      }
      epoch_rec += rec_loss;
      ++batches;

      MlpGrads dec_grads = prior.decoder.zero_grads();
      Eigen::MatrixXd grad_z =
          prior.decoder.backward(dec_trace, mse_gradient(rec, x), dec_grads);

      Eigen::MatrixXd grad_enc(2 * d, count);
      const double bn = static_cast<double>(count);
      if (cfg.beta > 0.0) {
        grad_enc.topRows(d) = grad_z + (cfg.beta / bn) * mu;
        grad_enc.bottomRows(d) =
            grad_z.cwiseProduct(eps).cwiseProduct((0.5 * lv).array().exp().matrix()) * 0.5 +
            (cfg.beta / bn) * 0.5 * (lv.array().exp() - 1.0).matrix();
      } else {
        grad_enc.topRows(d) = grad_z;
        grad_enc.bottomRows(d).setZero();
      }
      MlpGrads enc_grads = prior.encoder.zero_grads();
      prior.encoder.backward(enc_trace, grad_enc, enc_grads);

      enc_opt.step(prior.encoder, enc_grads);
      dec_opt.step(prior.decoder, dec_grads);
    }

    double vmse = 0.0;
    const double vloss = validation_loss(prior, vmse);
    if (!std::isfinite(vloss)) {
      throw NumericError("train_prior: non-finite validation loss at epoch " +
                         std::to_string(epoch));
    }
    if (vloss < best_val) {
      best_val = vloss;
      best.encoder = prior.encoder;
      best.decoder = prior.decoder;
      best.train_mse = epoch_rec / static_cast<double>(batches);
      best.val_mse = vmse;
    }
  }

  best.trained = true;
  return best;
}

Eigen::VectorXd encode_mean(const PriorModel& prior, const Eigen::VectorXd& flat_pose) {
  require_trained(prior, "encode_mean");
  return prior.encoder.forward(flat_pose).topRows(prior.d);
}

void encode(const PriorModel& prior, const Eigen::VectorXd& flat_pose, Eigen::VectorXd& mu,
            Eigen::VectorXd& logvar) {
  require_trained(prior, "encode");
  Eigen::MatrixXd out = prior.encoder.forward(flat_pose);
  mu = out.topRows(prior.d);
  logvar = out.bottomRows(prior.d);
}

Eigen::VectorXd decode_flat(const PriorModel& prior, const Eigen::VectorXd& z) {
  require_trained(prior, "decode");
  return prior.decoder.forward(z);
}

HumanPose decode(const PriorModel& prior, const Eigen::VectorXd& z) {
  return unflatten_pose(decode_flat(prior, z), prior.k);
}

HumanPose reconstruct(const PriorModel& prior, const HumanPose& pose) {
  require_trained(prior, "reconstruct");
  return decode(prior, encode_mean(prior, flatten_pose(pose)));
}

double phi(const PriorModel& prior, const HumanPose& pose) {
  const HumanPose rec = reconstruct(prior, pose);
  return (pose - rec).squaredNorm() / static_cast<double>(pose.cols());
}

namespace {

nlohmann::json prior_payload(const PriorModel& prior) {
  nlohmann::json payload;
  payload["k"] = prior.k;
  payload["d"] = prior.d;
  payload["beta"] = prior.beta;
  payload["trained"] = prior.trained;
  payload["corpus_hash"] = hash_hex(prior.corpus_hash);
  payload["train_mse"] = prior.train_mse;
  payload["val_mse"] = prior.val_mse;
  payload["config"] = {
      {"latent_dim", prior.config.latent_dim},
      {"hidden", prior.config.hidden},
      {"beta", prior.config.beta},
      {"epochs", prior.config.epochs},
      {"batch", prior.config.batch},
      {"lr", prior.config.lr},
      {"weight_decay", prior.config.weight_decay},
      {"val_fraction", prior.config.val_fraction},
      {"seed", prior.config.seed},
      {"activation", prior.config.activation == Activation::Gelu ? "gelu" : "identity"},
  };
  payload["encoder"] = mlp_to_json(prior.encoder);
  payload["decoder"] = mlp_to_json(prior.decoder);
  return payload;
}

}  // namespace

void save_prior(const std::string& path, const PriorModel& prior) {
  write_checkpoint(path, "pose-prior", prior_payload(prior));
}

uint64_t prior_weights_hash(const PriorModel& prior) {
  return fnv1a64(prior_payload(prior).dump());
}

PriorModel load_prior(const std::string& path) {
  const nlohmann::json payload = read_checkpoint(path, "pose-prior");
  PriorModel prior;
  prior.k = payload.at("k").get<int>();
  prior.d = payload.at("d").get<int>();
  prior.beta = payload.at("beta").get<double>();
  prior.trained = payload.at("trained").get<bool>();
  prior.corpus_hash = std::stoull(payload.value("corpus_hash", "0"), nullptr, 16);
  prior.train_mse = payload.value("train_mse", 0.0);
  prior.val_mse = payload.value("val_mse", 0.0);
  const auto& c = payload.at("config");
  prior.config.latent_dim = c.at("latent_dim").get<int>();
  prior.config.hidden = c.at("hidden").get<int>();
  prior.config.beta = c.at("beta").get<double>();
  prior.config.epochs = c.at("epochs").get<int>();
  prior.config.batch = c.at("batch").get<int>();
  prior.config.lr = c.at("lr").get<double>();
  prior.config.weight_decay = c.at("weight_decay").get<double>();
  prior.config.val_fraction = c.at("val_fraction").get<double>();
  prior.config.seed = c.at("seed").get<uint64_t>();
  prior.config.activation =
      c.at("activation").get<std::string>() == "gelu" ? Activation::Gelu : Activation::Identity;
  prior.encoder = mlp_from_json(payload.at("encoder"));
  prior.decoder = mlp_from_json(payload.at("decoder"));
  if (prior.encoder.input_dim != 6 * prior.k ||
      prior.encoder.output_dim != 2 * prior.d ||
      prior.decoder.input_dim != prior.d || prior.decoder.output_dim != 6 * prior.k) {
    throw ConfigError("prior checkpoint '" + path + "': dimensions disagree with k/d");
  }
  return prior;
}

namespace {

// Reusable FK buffers for the IK inner loop; human_fk would reallocate on
// every finite-difference probe.
struct FkScratch {
  std::vector<Mat3> world;
  Eigen::Matrix3Xd pos;

  explicit FkScratch(int k) : world(k), pos(3, k) {}

  void run(const ReferenceBody& body, const Eigen::VectorXd& flat) {
    const int k = body.k();
    for (int i = 0; i < k; ++i) {
      const BodyJoint& joint = body.joints[i];
      const Mat3 local = sixd_to_rotmat(flat.segment<6>(6 * i));
      if (joint.parent < 0) {
        pos.col(i) = joint.offset;
        world[i] = local;
      } else {
        pos.col(i) = pos.col(joint.parent) + world[joint.parent] * joint.offset;
        world[i] = world[joint.parent] * local;
      }
    }
  }
};

double target_error(const std::vector<IkTarget>& targets, const FkScratch& fk) {
  double err = 0.0;
  for (const auto& t : targets) {
    err += t.weight * (fk.pos.col(t.joint) - t.position).squaredNorm();
  }
  return err;
}

}  // namespace

Eigen::VectorXd fk_error_gradient(const ReferenceBody& body, const std::vector<IkTarget>& targets,
                                  const Eigen::VectorXd& flat) {
  const int k = body.k();
  if (static_cast<int>(flat.size()) != 6 * k) {
    throw DomainError("fk_error_gradient: flat pose length disagrees with the body");
  }
  for (const auto& t : targets) {
    if (t.joint < 0 || t.joint >= k) throw DomainError("fk_error_gradient: target joint out of range");
  }
  FkScratch fk(k);
  fk.run(body, flat);

  // A target's position depends on an ancestor j only through
  //   P_t = pos_j + W_p L_j v_j,
  // with W_p the parent world rotation and v_j fixed in j's frame, so
  //   dE_t/dL_j = (W_p^T r) (L_j^T W_p^T (P_t - pos_j))^T,  r = 2w (P_t - g).
  // Accumulate the outer products per joint, then contract with the
  // Gram-Schmidt Jacobian once each.
  std::vector<Mat3> outer(k, Mat3::Zero());
  std::vector<char> touched(k, 0);
  for (const auto& t : targets) {
    const Vec3 r = 2.0 * t.weight * (fk.pos.col(t.joint) - t.position);
    for (int j = body.joints[t.joint].parent; j >= 0; j = body.joints[j].parent) {
      const int p = body.joints[j].parent;
      const Vec3 reach = fk.pos.col(t.joint) - fk.pos.col(j);
      Vec3 rho, y;
      if (p < 0) {
        rho = r;
        y = reach;
      } else {
        rho = fk.world[p].transpose() * r;
        y = fk.world[p].transpose() * reach;
      }
      outer[j] += rho * y.transpose();
      touched[j] = 1;
    }
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(6 * k);
  for (int j = 0; j < k; ++j) {
    if (!touched[j]) continue;
    const Vec6 six = flat.segment<6>(6 * j);
    const Mat3 g = outer[j] * sixd_to_rotmat(six);
    grad.segment<6>(6 * j) =
        sixd_to_rotmat_jacobian(six).transpose() *
        Eigen::Map<const Eigen::Matrix<double, 9, 1>>(g.data());
  }
  return grad;
}

const char* ik_route_name(IkGradRoute route) {
  switch (route) {
    case IkGradRoute::Latent:
      return "latent-fd";
    case IkGradRoute::Pose:
      return "pose-fd";
    case IkGradRoute::Analytic:
      return "analytic";
  }
  return "analytic";
}

IkGradRoute ik_route_from_name(const std::string& name) {
  if (name == "latent-fd") return IkGradRoute::Latent;
  if (name == "pose-fd") return IkGradRoute::Pose;
  if (name == "analytic") return IkGradRoute::Analytic;
  throw ConfigError("unknown ik gradient route '" + name + "'");
}

IkResult ik_solve(const PriorModel& prior, const ReferenceBody& body,
                  const std::vector<IkTarget>& targets, const IkConfig& cfg) {
  require_trained(prior, "ik_solve");
  if (targets.empty()) throw ConfigError("ik_solve: no targets");
  if (body.k() != prior.k) throw ConfigError("ik_solve: body and prior disagree on joint count");
  for (const auto& t : targets) {
    if (t.joint < 0 || t.joint >= body.k()) throw ConfigError("ik_solve: target joint out of range");
    if (!(t.weight > 0.0)) throw ConfigError("ik_solve: target weight must be > 0");
  }

  const int d = prior.d;
  const int k = body.k();
  FkScratch fk(k);

  const auto error_of_flat = [&](const Eigen::VectorXd& flat) {
    fk.run(body, flat);
    return target_error(targets, fk);
  };
  const auto objective = [&](const Eigen::VectorXd& z) {
    return error_of_flat(prior.decoder.forward(z)) + cfg.lambda * z.squaredNorm();
  };

  // Pose coordinates that can move a target: the 6 entries of every strict
  // ancestor of a targeted joint.
  std::vector<int> active_coords;
  if (cfg.route == IkGradRoute::Pose) {
    std::vector<char> active(k, 0);
    for (const auto& t : targets) {
      for (int a = body.joints[t.joint].parent; a >= 0; a = body.joints[a].parent) active[a] = 1;
    }
    for (int i = 0; i < k; ++i) {
      if (active[i]) {
        for (int c = 0; c < 6; ++c) active_coords.push_back(6 * i + c);
      }
    }
  }

  Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
  VecAdam opt({.lr = cfg.lr});

  IkResult result;
  result.initial_objective = objective(z);
  double best_obj = result.initial_objective;
  Eigen::VectorXd best_z = z;
  std::vector<double> best_hist;
  best_hist.reserve(cfg.max_iters);

  Eigen::VectorXd grad(d);
  // Parameter gradients from the decoder backward pass are discarded (only
  // the input gradient feeds the step), so one accumulator serves the whole
  // solve.
  MlpGrads dec_scratch = prior.decoder.zero_grads();
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    if (cfg.route == IkGradRoute::Latent) {
      // Batch the 2d probes through one decoder pass.
      Eigen::MatrixXd zs(d, 2 * d);
      for (int i = 0; i < d; ++i) {
        zs.col(2 * i) = z;
        zs.col(2 * i)[i] += cfg.fd_step;
        zs.col(2 * i + 1) = z;
        zs.col(2 * i + 1)[i] -= cfg.fd_step;
      }
      Eigen::MatrixXd flats = prior.decoder.forward(zs);
      for (int i = 0; i < d; ++i) {
        const double up = error_of_flat(flats.col(2 * i)) +
                          cfg.lambda * zs.col(2 * i).squaredNorm();
        const double dn = error_of_flat(flats.col(2 * i + 1)) +
                          cfg.lambda * zs.col(2 * i + 1).squaredNorm();
        grad[i] = (up - dn) / (2.0 * cfg.fd_step);
      }
    } else {
      Mlp::Trace trace;
      Eigen::VectorXd flat = prior.decoder.forward(z, trace);
      Eigen::VectorXd grad_flat;
      if (cfg.route == IkGradRoute::Analytic) {
        grad_flat = fk_error_gradient(body, targets, flat);
      } else {
        grad_flat = Eigen::VectorXd::Zero(6 * k);
        Eigen::VectorXd probe = flat;
        for (int idx : active_coords) {
          const double keep = probe[idx];
          probe[idx] = keep + cfg.fd_step;
          const double up = error_of_flat(probe);
          probe[idx] = keep - cfg.fd_step;
          const double dn = error_of_flat(probe);
          probe[idx] = keep;
          grad_flat[idx] = (up - dn) / (2.0 * cfg.fd_step);
        }
      }
      grad = prior.decoder.backward(trace, grad_flat, dec_scratch) + 2.0 * cfg.lambda * z;
    }

    opt.step(z, grad);
    const double obj = objective(z);
    if (!std::isfinite(obj)) break;
    if (obj < best_obj) {
      best_obj = obj;
      best_z = z;
    }
    best_hist.push_back(best_obj);
    const int w = cfg.plateau_window;
    if (w > 0 && iter >= w) {
      const double before = best_hist[iter - w];
      if (before - best_obj <= cfg.plateau_rtol * std::max(before, 1e-12)) {
        ++iter;
        break;
      }
    }
  }

  result.z = best_z;
  result.pose = decode(prior, best_z);
  result.objective = best_obj;
  result.iters = iter;
  fk.run(body, flatten_pose(result.pose));
  result.residuals.reserve(targets.size());
  double sum = 0.0;
  for (const auto& t : targets) {
    const double r = (fk.pos.col(t.joint) - t.position).norm();
    result.residuals.push_back(r);
    sum += r;
  }
  result.mean_residual = sum / static_cast<double>(targets.size());
  result.converged = result.mean_residual <= cfg.converge_residual;
  return result;
}

}  // namespace remap
