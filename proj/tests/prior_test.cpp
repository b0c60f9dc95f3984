#include <Eigen/Eigenvalues>
#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "remap/errors.hpp"
#include "remap/prior.hpp"
#include "remap/rng.hpp"

using namespace remap;

TEST_CASE("untrained prior refuses to run") {
  PriorModel raw = make_untrained_prior(5, fixtures::small_prior_config());
  HumanPose pose = generate_uniform_rom(fixtures::small_body(), 1, 3)[0];
  CHECK_THROWS_AS(reconstruct(raw, pose), ConfigError);
  CHECK_THROWS_AS(ik_solve(raw, fixtures::small_body(), {{3, Vec3(0, 0.3, 0.3), 1.0}}, {}),
                  ConfigError);
}

TEST_CASE("training converges and generalizes") {
  const PriorModel& prior = fixtures::small_prior();
  CHECK(prior.trained);
  CHECK(prior.k == 5);
  CHECK(prior.d == 8);
  CHECK(std::isfinite(prior.val_mse));

  // held-out in-distribution poses reconstruct within 10x the training MSE
  auto held_out = generate_corpus(fixtures::small_body(), 300, 4, 5150);
  double held = 0.0;
  for (const auto& pose : held_out) held += phi(prior, pose) / 6.0;  // per-entry scale
  held /= held_out.size();
  CHECK(held < 10.0 * std::max(prior.train_mse, 1e-6));
}

TEST_CASE("reconstruction is deterministic") {
  const PriorModel& prior = fixtures::small_prior();
  HumanPose pose = generate_corpus(fixtures::small_body(), 1, 4, 888)[0];
  CHECK(reconstruct(prior, pose) == reconstruct(prior, pose));
  CHECK(phi(prior, pose) == phi(prior, pose));
}

TEST_CASE("the mean pose encodes near zero") {
  const PriorModel& prior = fixtures::small_prior();
  HumanPose mean_pose = decode(prior, Eigen::VectorXd::Zero(prior.d));
  Eigen::VectorXd mu = encode_mean(prior, flatten_pose(mean_pose));
  CHECK(mu.norm() < 1.0);
}

TEST_CASE("phi separates corpus poses from uniform-ROM poses") {
  const PriorModel& prior = fixtures::small_prior();
  const ReferenceBody& body = fixtures::small_body();
  auto natural = generate_corpus(body, 500, 4, 4242);
  auto extreme = generate_uniform_rom(body, 500, 4243);
  double phi_nat = 0.0, phi_ext = 0.0;
  for (const auto& p : natural) phi_nat += phi(prior, p);
  for (const auto& p : extreme) phi_ext += phi(prior, p);
  phi_nat /= natural.size();
  phi_ext /= extreme.size();
  CHECK(phi_nat < phi_ext);

  // reconstruction pulls poses toward the manifold: phi never grows on
  // average after a denoising pass
  double phi_before = 0.0, phi_after = 0.0;
  for (int i = 0; i < 100; ++i) {
    phi_before += phi(prior, natural[i]);
    phi_after += phi(prior, reconstruct(prior, natural[i]));
  }
  CHECK(phi_after <= phi_before);
}

TEST_CASE("beta 0 with linear nets approaches the PCA floor") {
  const ReferenceBody& body = fixtures::small_body();
  auto corpus = generate_corpus(body, 1500, 4, 31337);

  PriorTrainConfig cfg;
  cfg.latent_dim = 15;  // 3k: as many latents as angle dimensions
  cfg.hidden = 64;
  cfg.beta = 0.0;
  cfg.epochs = 300;
  cfg.batch = 256;
  cfg.lr = 2e-3;
  cfg.seed = 99;
  cfg.activation = Activation::Identity;
  PriorModel ae = train_prior(corpus, cfg);

  Eigen::MatrixXd flats(30, corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) flats.col(i) = flatten_pose(corpus[i]);
  Eigen::VectorXd mean = flats.rowwise().mean();
  Eigen::MatrixXd centered = flats.colwise() - mean;
  Eigen::MatrixXd cov = centered * centered.transpose() / double(corpus.size() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  //
  // Per-entry residual variance of the best rank-15 linear model.
  const double pca_floor = eig.eigenvalues().head(30 - 15).sum() / 30.0;

  double recon = 0.0;
  for (const auto& pose : corpus) {
    recon += (reconstruct(ae, pose) - pose).squaredNorm() / 30.0;
  }
  recon /= corpus.size();
  // The identity-activation autoencoder can do no better than PCA; demand
  // it lands in the same regime.
  CHECK(recon >= pca_floor - 1e-9);
  CHECK(recon <= 2.0 * pca_floor + 1e-4);
}

TEST_CASE("prior checkpoint round trip") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "prior_test.json").string();
  const PriorModel& prior = fixtures::small_prior();
  save_prior(path, prior);
  PriorModel back = load_prior(path);
  CHECK(back.trained);
  CHECK(back.k == prior.k);
  CHECK(back.d == prior.d);
  CHECK(back.encoder.w1 == prior.encoder.w1);
  CHECK(back.decoder.w2 == prior.decoder.w2);
  CHECK(back.config.seed == prior.config.seed);
  HumanPose pose = generate_corpus(fixtures::small_body(), 1, 4, 3)[0];
  CHECK(reconstruct(back, pose) == reconstruct(prior, pose));
  fs::remove(path);
}

TEST_CASE("ik: self-consistency at the prior mean") {
  const PriorModel& prior = fixtures::small_prior();
  const ReferenceBody& body = fixtures::small_body();
  HumanPose mean_pose = decode(prior, Eigen::VectorXd::Zero(prior.d));
  Eigen::Matrix3Xd pos = human_fk(body, mean_pose);

  std::vector<IkTarget> targets = {{2, pos.col(2), 1.0}, {3, pos.col(3), 1.0},
                                   {4, pos.col(4), 1.0}};
  IkConfig cfg;
  IkResult res = ik_solve(prior, body, targets, cfg);
  CHECK(res.converged);
  CHECK(res.mean_residual < 0.01);
  CHECK(res.z.norm() < 0.5);
  CHECK(res.objective <= res.initial_objective);
}

TEST_CASE("ik: recovers poses decoded from nearby latents") {
  const PriorModel& prior = fixtures::small_prior();
  const ReferenceBody& body = fixtures::small_body();
  Rng rng(606);
  double total_residual = 0.0;
  int count = 0;
  for (int trial = 0; trial < 8; ++trial) {
    Eigen::VectorXd z(prior.d);
    for (int i = 0; i < prior.d; ++i) z[i] = rng.normal();
    if (z.norm() > 2.0) z *= 2.0 / z.norm();
    Eigen::Matrix3Xd pos = human_fk(body, decode(prior, z));
    std::vector<IkTarget> targets = {{2, pos.col(2), 1.0}, {3, pos.col(3), 1.0},
                                     {4, pos.col(4), 1.0}};
    IkResult res = ik_solve(prior, body, targets, {});
    CHECK(res.objective <= res.initial_objective);
    total_residual += res.mean_residual;
    ++count;
  }
  // Measured 2.4-2.6 cm on this fixture: the latent regularizer trades a
  // couple of centimeters against ||z|| near the corpus edge (||z|| ~ 2).
  // Frozen at the pipeline's own 3 cm convergence threshold.
  CHECK(total_residual / count < 0.03);
}

TEST_CASE("ik: flags unreachable targets instead of throwing") {
  const PriorModel& prior = fixtures::small_prior();
  const ReferenceBody& body = fixtures::small_body();
  IkResult res = ik_solve(prior, body, {{3, Vec3(0, 5.0, 0), 1.0}}, {});
  CHECK_FALSE(res.converged);
  CHECK(res.mean_residual > 1.0);
}

TEST_CASE("ik: latent and pose gradient routes agree") {
  const PriorModel& prior = fixtures::small_prior();
  const ReferenceBody& body = fixtures::small_body();
  Eigen::VectorXd z(prior.d);
  Rng rng(707);
  for (int i = 0; i < prior.d; ++i) z[i] = 0.5 * rng.normal();
  Eigen::Matrix3Xd pos = human_fk(body, decode(prior, z));
  std::vector<IkTarget> targets = {{3, pos.col(3), 1.0}, {4, pos.col(4), 2.0}};

  IkConfig latent_cfg;
  latent_cfg.route = IkGradRoute::Latent;
  IkConfig pose_cfg;
  pose_cfg.route = IkGradRoute::Pose;
  IkConfig analytic_cfg;
  analytic_cfg.route = IkGradRoute::Analytic;
  IkResult a = ik_solve(prior, body, targets, latent_cfg);
  IkResult b = ik_solve(prior, body, targets, pose_cfg);
  IkResult c = ik_solve(prior, body, targets, analytic_cfg);
  CHECK(a.mean_residual < 0.02);
  CHECK(b.mean_residual < 0.02);
  CHECK(c.mean_residual < 0.02);
  CHECK(std::abs(a.objective - b.objective) <
        0.25 * std::max(a.objective, b.objective) + 1e-6);
  CHECK(std::abs(a.objective - c.objective) <
        0.25 * std::max(a.objective, c.objective) + 1e-6);
}

TEST_CASE("analytic fk error gradient matches finite differences") {
  const ReferenceBody& body = fixtures::small_body();
  Rng rng(909);
  for (int trial = 0; trial < 5; ++trial) {
    HumanPose pose = generate_corpus(body, 1, 4, 2000 + trial)[0];
    std::vector<IkTarget> targets = {{3, Vec3(0.1, 0.3, 0.4), 1.0},
                                     {4, Vec3(-0.1, 0.0, 0.5), 0.7},
                                     {2, Vec3(0.0, 0.2, 0.3), 1.3}};
    const Eigen::VectorXd flat = flatten_pose(pose);

    auto err = [&](const Eigen::VectorXd& f) {
      Eigen::Matrix3Xd p = human_fk(body, unflatten_pose(f, body.k()));
      double e = 0.0;
      for (const auto& t : targets) e += t.weight * (p.col(t.joint) - t.position).squaredNorm();
      return e;
    };
    const Eigen::VectorXd fd = oracle::fd_gradient(err, flat, 1e-6);
    const Eigen::VectorXd an = fk_error_gradient(body, targets, flat);
    REQUIRE(an.size() == fd.size());
    for (int i = 0; i < an.size(); ++i) {
      CHECK(std::abs(an[i] - fd[i]) < 1e-6 * std::max(1.0, std::abs(fd[i])));
    }
    // leaf coordinates are exactly zero, not merely small
    for (int c = 0; c < 6; ++c) CHECK(an[6 * 3 + c] == 0.0);
  }
}

TEST_CASE("analytic route assembles the same latent gradient as differencing z") {
  const PriorModel& prior = fixtures::small_prior();
  const ReferenceBody& body = fixtures::small_body();
  const double lambda = 0.01;
  std::vector<IkTarget> targets = {{2, Vec3(0.05, 0.25, 0.35), 1.0},
                                   {3, Vec3(0.0, 0.45, 0.3), 1.0}};

  auto objective = [&](const Eigen::VectorXd& z) {
    Eigen::Matrix3Xd p = human_fk(body, decode(prior, z));
    double e = lambda * z.squaredNorm();
    for (const auto& t : targets) e += t.weight * (p.col(t.joint) - t.position).squaredNorm();
    return e;
  };

  Rng rng(911);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd z(prior.d);
    for (int i = 0; i < prior.d; ++i) z[i] = 0.7 * rng.normal();

    Mlp::Trace trace;
    Eigen::VectorXd flat = prior.decoder.forward(z, trace);
    MlpGrads scratch = prior.decoder.zero_grads();
    Eigen::VectorXd analytic =
        prior.decoder.backward(trace, fk_error_gradient(body, targets, flat), scratch) +
        2.0 * lambda * z;
    Eigen::VectorXd fd = oracle::fd_gradient(objective, z, 1e-5);
    for (int i = 0; i < prior.d; ++i) {
      CHECK(std::abs(analytic[i] - fd[i]) < 1e-4 * std::max(1.0, std::abs(fd[i])));
    }
  }
}

TEST_CASE("target error ignores exactly the non-ancestor coordinates") {
  const ReferenceBody& body = fixtures::small_body();
  HumanPose pose = generate_corpus(body, 1, 4, 11)[0];
  const Vec3 goal(0.1, 0.3, 0.4);

  auto err = [&](const Eigen::VectorXd& flat) {
    Eigen::Matrix3Xd p = human_fk(body, unflatten_pose(flat, body.k()));
    return (p.col(3) - goal).squaredNorm();  // wrist target
  };
  Eigen::VectorXd g = oracle::fd_gradient(err, flatten_pose(pose), 1e-6);

  // wrist ancestors: elbow(2), shoulder(1), spine(0). Coordinates of the
  // wrist itself and of the head branch cannot move the target.
  for (int joint : {3, 4}) {
    for (int c = 0; c < 6; ++c) CHECK(g[6 * joint + c] == 0.0);
  }
  double ancestor_mag = 0.0;
  for (int joint : {0, 1, 2}) {
    for (int c = 0; c < 6; ++c) ancestor_mag += std::abs(g[6 * joint + c]);
  }
  CHECK(ancestor_mag > 1e-3);
}
