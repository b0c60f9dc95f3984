#include "remap/retarget.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "remap/body.hpp"
#include "remap/errors.hpp"
#include "remap/io.hpp"
#include "remap/rng.hpp"

using namespace remap;

namespace {

RetargetConfig tiny_config() {
  RetargetConfig cfg;
  cfg.hidden = 32;
  cfg.batch = 32;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  return cfg;
}

// Hand-sized model with no profile behind it; enough for loss and gradient
// math, which never touches kinematics.
RetargetModel toy_model(uint64_t seed) {
  RetargetModel model;
  model.k = 2;
  model.m = 3;
  model.n = 4;
  model.f_pre = make_mlp(12, 8, 18, Activation::Gelu, derive_seed(seed, 1));
  model.f_post = make_mlp(18, 8, 4, Activation::Gelu, derive_seed(seed, 2));
  model.joint_names = {"a", "b", "c", "d"};
  model.limits = {{-1.0, 1.0}, {-2.0, 0.5}, {-0.5, 2.0}, {-3.0, 3.0}};
  return model;
}

RetargetBatch random_batch(const RetargetModel& model, int b, uint64_t seed) {
  Rng rng(seed);
  RetargetBatch batch;
  batch.h.resize(6 * model.k, b);
  batch.r.resize(6 * model.m, b);
  batch.q.resize(model.n, b);
  for (Eigen::Index i = 0; i < batch.h.size(); ++i) batch.h(i) = rng.normal();
  for (Eigen::Index i = 0; i < batch.r.size(); ++i) batch.r(i) = rng.normal();
  for (Eigen::Index i = 0; i < batch.q.size(); ++i) batch.q(i) = rng.normal();
  return batch;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("make_retarget_model wires the profile into the network shapes") {
  const RobotProfile& profile = fixtures::reachy_profile();
  const RetargetModel model = make_retarget_model(profile, 21, tiny_config(), 3);
  CHECK(model.f_pre.input_dim == 6 * 21);
  CHECK(model.f_pre.hidden_dim == 32);
  CHECK(model.f_pre.output_dim == 6 * profile.chain.m());
  CHECK(model.f_post.input_dim == 6 * profile.chain.m());
  CHECK(model.f_post.output_dim == profile.chain.n());
  CHECK(model.profile_hash == profile.content_hash);
  CHECK(static_cast<int>(model.joint_names.size()) == profile.chain.n());
  CHECK(static_cast<int>(model.limits.size()) == profile.chain.n());
  CHECK_FALSE(model.trained);

  RetargetConfig bad = tiny_config();
  bad.val_fraction = 1.0;
  CHECK_THROWS_AS(make_retarget_model(profile, 21, bad, 3), ConfigError);
  bad = tiny_config();
  bad.batch = 0;
  CHECK_THROWS_AS(make_retarget_model(profile, 21, bad, 3), ConfigError);
}

TEST_CASE("predict: zero weights collapse to one clamped constant") {
  RetargetModel model = toy_model(1);
  model.f_pre.w1.setZero();
  model.f_pre.b1.setZero();
  model.f_pre.w2.setZero();
  model.f_pre.b2.setZero();
  model.f_post.w1.setZero();
  model.f_post.b1.setZero();
  model.f_post.w2.setZero();
  model.f_post.b2.setConstant(5.0);

  const RetargetPrediction a = predict(model, HumanPose::Random(6, 2));
  const RetargetPrediction b = predict(model, HumanPose::Random(6, 2));
  CHECK((a.q.array() == b.q.array()).all());
  CHECK((a.q_raw.array() == 5.0).all());
  // 5.0 exceeds every upper limit, so the clamp lands on the table.
  for (int i = 0; i < model.n; ++i) CHECK(a.q[i] == model.limits[i].second);
}

TEST_CASE("predict always lands inside the joint limits") {
  const RetargetModel model = toy_model(7);
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    HumanPose h(6, model.k);
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = 3.0 * rng.normal();
    const RetargetPrediction pred = predict(model, h);
    for (int j = 0; j < model.n; ++j) {
      CHECK(pred.q[j] >= model.limits[j].first);
      CHECK(pred.q[j] <= model.limits[j].second);
    }
    CHECK(pred.r.cols() == model.m);
  }
  CHECK_THROWS_AS(predict(model, HumanPose::Random(6, 3)), DomainError);
}

TEST_CASE("compute_losses: a self-consistent batch costs exactly zero") {
  const RetargetModel model = toy_model(2);
  RetargetBatch batch = random_batch(model, 5, 11);
  // Ground truth manufactured from the model's own forward maps.
  batch.r = model.f_pre.forward(batch.h);
  batch.q = model.f_post.forward(batch.r);

  const RetargetLosses losses = compute_losses(model, batch);
  CHECK(losses.pre == 0.0);
  CHECK(losses.post == 0.0);
  CHECK(losses.total == 0.0);
}

TEST_CASE("compute_losses: wrong f_pre leaves the teacher term at zero") {
  const RetargetModel model = toy_model(3);
  RetargetBatch batch = random_batch(model, 6, 12);
  batch.r = model.f_pre.forward(batch.h);
  batch.r.array() += 0.1;  // f_pre now "wrong" relative to the ground truth
  batch.q = model.f_post.forward(batch.r);

  const RetargetLosses losses = compute_losses(model, batch);
  const double student = mse(model.f_post.forward(model.f_pre.forward(batch.h)), batch.q);
  CHECK(losses.pre > 0.0);
  CHECK(losses.post == student);  // teacher contributes exactly nothing
  CHECK(student > 0.0);
}

TEST_CASE("compute_losses: total is the plain sum and terms recompute by hand") {
  const RetargetModel model = toy_model(4);
  const RetargetBatch batch = random_batch(model, 8, 13);
  const RetargetLosses losses = compute_losses(model, batch);

  const Eigen::MatrixXd r_hat = model.f_pre.forward(batch.h);
  const double pre = mse(r_hat, batch.r);
  const double teacher = mse(model.f_post.forward(batch.r), batch.q);
  const double student = mse(model.f_post.forward(r_hat), batch.q);
  CHECK(losses.pre == pre);
  CHECK(losses.post == teacher + student);
  CHECK(losses.total == losses.pre + losses.post);
}

TEST_CASE("compute_losses: the teacher term ignores f_pre's weights") {
  RetargetModel model = toy_model(5);
  const RetargetBatch batch = random_batch(model, 8, 14);
  const double teacher_before = mse(model.f_post.forward(batch.r), batch.q);
  const RetargetLosses before = compute_losses(model, batch);

  model.f_pre.w1.array() += 0.3;
  model.f_pre.b2.array() -= 0.2;
  const double teacher_after = mse(model.f_post.forward(batch.r), batch.q);
  const RetargetLosses after = compute_losses(model, batch);

  CHECK(teacher_before == teacher_after);
  // The change in L_post is entirely the student's.
  const double student_before = before.post - teacher_before;
  const double student_after = after.post - teacher_after;
  CHECK(student_before != student_after);
}

TEST_CASE("loss gradients match finite differences through both networks") {
  const RetargetModel model = toy_model(6);
  const RetargetBatch batch = random_batch(model, 4, 15);
  RetargetGrads grads;
  compute_losses(model, batch, &grads);

  auto fd_check = [&](auto select_param, const Eigen::MatrixXd& grad) {
    RetargetModel probe = model;
    Eigen::MatrixXd& param = select_param(probe);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param(i);
      param(i) = saved + h;
      const double up = compute_losses(probe, batch).total;
      param(i) = saved - h;
      const double down = compute_losses(probe, batch).total;
      param(i) = saved;
      const double fd = (up - down) / (2.0 * h);
      CHECK(grad(i) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  };

  fd_check([](RetargetModel& m) -> Eigen::MatrixXd& { return m.f_pre.w1; }, grads.pre.w1);
  fd_check([](RetargetModel& m) -> Eigen::MatrixXd& { return m.f_pre.w2; }, grads.pre.w2);
  fd_check([](RetargetModel& m) -> Eigen::MatrixXd& { return m.f_post.w1; }, grads.post.w1);
  fd_check([](RetargetModel& m) -> Eigen::MatrixXd& { return m.f_post.w2; }, grads.post.w2);

  auto fd_check_vec = [&](auto select_param, const Eigen::VectorXd& grad) {
    RetargetModel probe = model;
    Eigen::VectorXd& param = select_param(probe);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param(i);
      param(i) = saved + h;
      const double up = compute_losses(probe, batch).total;
      param(i) = saved - h;
      const double down = compute_losses(probe, batch).total;
      param(i) = saved;
      CHECK(grad(i) == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-5).scale(1.0));
    }
  };
  fd_check_vec([](RetargetModel& m) -> Eigen::VectorXd& { return m.f_pre.b1; }, grads.pre.b1);
  fd_check_vec([](RetargetModel& m) -> Eigen::VectorXd& { return m.f_pre.b2; }, grads.pre.b2);
  fd_check_vec([](RetargetModel& m) -> Eigen::VectorXd& { return m.f_post.b1; }, grads.post.b1);
  fd_check_vec([](RetargetModel& m) -> Eigen::VectorXd& { return m.f_post.b2; }, grads.post.b2);
}

TEST_CASE("validation_mask is a deterministic order-independent partition") {
  const PairedDataset& ds = fixtures::paired_small();
  const std::vector<char> mask = validation_mask(ds, 0.1);
  int val = 0;
  for (char c : mask) val += c;
  CHECK(val == 30);

  PairedDataset reversed;
  reversed.provenance = ds.provenance;
  reversed.samples.assign(ds.samples.rbegin(), ds.samples.rend());
  const std::vector<char> rmask = validation_mask(reversed, 0.1);
  for (size_t i = 0; i < mask.size(); ++i) {
    CHECK(mask[i] == rmask[mask.size() - 1 - i]);
  }

  // Tiny sets still leave both sides nonempty.
  PairedDataset two;
  two.samples = {ds.samples[0], ds.samples[1]};
  const std::vector<char> tiny = validation_mask(two, 0.1);
  CHECK(tiny[0] + tiny[1] == 1);
}

TEST_CASE("train_retarget: zero learning rate leaves the weights untouched") {
  const RobotProfile& profile = fixtures::reachy_profile();
  PairedDataset ten;
  ten.provenance = fixtures::paired_small().provenance;
  ten.samples.assign(fixtures::paired_small().samples.begin(),
                     fixtures::paired_small().samples.begin() + 10);

  RetargetConfig cfg = tiny_config();
  cfg.lr = 0.0;
  cfg.epochs = 1;
  cfg.batch = 4;
  const RetargetModel model = train_retarget(ten, profile, cfg);
  const RetargetModel fresh = make_retarget_model(profile, 21, cfg, cfg.seed);
  CHECK((model.f_pre.w1.array() == fresh.f_pre.w1.array()).all());
  CHECK((model.f_pre.b2.array() == fresh.f_pre.b2.array()).all());
  CHECK((model.f_post.w2.array() == fresh.f_post.w2.array()).all());
  CHECK(model.trained);
}

TEST_CASE("train_retarget: same seed, identical checkpoints") {
  const RobotProfile& profile = fixtures::reachy_profile();
  const RetargetConfig cfg = tiny_config();
  TrainLog log_a, log_b;
  const RetargetModel a = train_retarget(fixtures::paired_small(), profile, cfg, &log_a);
  const RetargetModel b = train_retarget(fixtures::paired_small(), profile, cfg, &log_b);
  CHECK(retarget_weights_hash(a) == retarget_weights_hash(b));
  CHECK(log_a.best_epoch == log_b.best_epoch);
  CHECK(log_a.best_val_link_error == log_b.best_val_link_error);

  RetargetConfig other = cfg;
  other.seed = cfg.seed + 1;
  const RetargetModel c = train_retarget(fixtures::paired_small(), profile, other);
  CHECK(retarget_weights_hash(a) != retarget_weights_hash(c));
}

TEST_CASE("train_retarget learns the shared dataset to useful accuracy") {
  const RobotProfile& profile = fixtures::reachy_profile();
  RetargetConfig cfg = tiny_config();
  cfg.hidden = 64;
  cfg.epochs = 20;
  cfg.batch = 64;
  TrainLog log;
  const RetargetModel model = train_retarget(fixtures::paired_small(), profile, cfg, &log);

  CHECK(model.trained);
  CHECK(log.best_epoch >= 1);
  CHECK(log.best_epoch <= cfg.epochs);
  CHECK(log.train_count + log.val_count == 300);
  CHECK(log.val_count == 30);
  CHECK(log.total_steps == cfg.epochs * ((log.train_count + 63) / 64));
  CHECK(static_cast<int>(log.epochs.size()) == cfg.epochs);

  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : log.epochs) best = std::min(best, e.val_link_error);
  CHECK(model.best_val_link_error == best);
  // Loss goes down and so does validation error, against epoch one.
  CHECK(log.epochs.back().l_total < log.epochs.front().l_total);
  CHECK(model.best_val_link_error < log.epochs.front().val_link_error);

  // Fixture regression: training samples score within a factor of the
  // recorded validation error.
  const std::vector<char> mask = validation_mask(fixtures::paired_small(), cfg.val_fraction);
  double train_err = 0.0;
  int counted = 0;
  for (size_t i = 0; i < mask.size() && counted < 10; ++i) {
    if (mask[i]) continue;
    const PairedSample& s = fixtures::paired_small().samples[i];
    const RetargetPrediction pred = predict(model, s.h);
    const Eigen::Matrix3Xd got = forward_kinematics(profile.chain, pred.q_raw).p;
    const Eigen::Matrix3Xd want = forward_kinematics(profile.chain, s.q).p;
    double err = 0.0;
    for (int link : profile.key_link_indices()) {
      err += (got.col(link) - want.col(link)).norm();
    }
    train_err += 100.0 * err / static_cast<double>(profile.key_link_indices().size());
    ++counted;
  }
  train_err /= counted;
  CHECK(train_err < 3.0 * model.best_val_link_error);
}

TEST_CASE("train_retarget aborts on a diverging run and keeps good weights") {
  const RobotProfile& profile = fixtures::reachy_profile();
  RetargetConfig cfg = tiny_config();
  cfg.lr = 1e200;
  cfg.epochs = 5;
  TrainLog log;
  const RetargetModel model = train_retarget(fixtures::paired_small(), profile, cfg, &log);
  CHECK(log.aborted);
  CHECK(model.f_pre.w1.allFinite());
  CHECK(model.f_post.w2.allFinite());
  if (log.best_epoch < 0) {
    const RetargetModel fresh = make_retarget_model(profile, 21, cfg, cfg.seed);
    CHECK((model.f_pre.w1.array() == fresh.f_pre.w1.array()).all());
    CHECK_FALSE(model.trained);
  }
}

TEST_CASE("train_retarget validates dataset against profile") {
  RetargetConfig cfg = tiny_config();
  PairedDataset wrong = fixtures::paired_small();
  wrong.provenance.profile_hash ^= 1;
  CHECK_THROWS_AS(train_retarget(wrong, fixtures::reachy_profile(), cfg), ConfigError);

  PairedDataset one;
  one.provenance = fixtures::paired_small().provenance;
  one.samples.push_back(fixtures::paired_small().samples[0]);
  CHECK_THROWS_AS(train_retarget(one, fixtures::reachy_profile(), cfg), ConfigError);
}

TEST_CASE("retarget checkpoints round-trip and reject tampering") {
  const RobotProfile& profile = fixtures::reachy_profile();
  RetargetConfig cfg = tiny_config();
  cfg.epochs = 1;
  const RetargetModel model = train_retarget(fixtures::paired_small(), profile, cfg);

  const std::string path = temp_path("remap_retarget_ckpt.json");
  save_retarget(path, model);
  const RetargetModel back = load_retarget(path);
  CHECK(retarget_weights_hash(back) == retarget_weights_hash(model));
  CHECK(back.k == model.k);
  CHECK(back.joint_names == model.joint_names);
  CHECK(back.limits == model.limits);
  CHECK(back.trained == model.trained);
  CHECK(back.best_val_link_error == model.best_val_link_error);
  CHECK(back.config.hidden == cfg.hidden);
  CHECK(back.config.seed == cfg.seed);

  // Predictions survive the round trip bitwise.
  const HumanPose h = fixtures::paired_small().samples[0].h;
  CHECK((predict(back, h).q_raw.array() == predict(model, h).q_raw.array()).all());

  std::string text = read_file(path);
  const size_t at = text.find("0.");
  text[at + 2] = text[at + 2] == '5' ? '6' : '5';
  write_file(path, text);
  CHECK_THROWS_AS(load_retarget(path), ConfigError);
  std::remove(path.c_str());
}

TEST_CASE("motion files round-trip and reject malformed input") {
  MotionFile motion;
  motion.joint_names = {"j1", "j2", "j3"};
  Rng rng(4);
  for (int f = 0; f < 6; ++f) {
    JointVector q(3);
    for (int i = 0; i < 3; ++i) q[i] = rng.normal();
    motion.frames.push_back(q);
  }
  const std::string path = temp_path("remap_motion_roundtrip.txt");
  write_motion(path, motion);
  const MotionFile back = read_motion(path);
  CHECK(back.joint_names == motion.joint_names);
  REQUIRE(back.frames.size() == motion.frames.size());
  for (size_t f = 0; f < motion.frames.size(); ++f) {
    CHECK((back.frames[f].array() == motion.frames[f].array()).all());
  }

  write_file(path, "# motion v1 n=2 count=1\n# joints a b\n0.5\n");
  CHECK_THROWS_AS(read_motion(path), IoError);
  write_file(path, "# motion v1 n=2 count=2\n# joints a b\n0.5 0.25\n");
  CHECK_THROWS_AS(read_motion(path), IoError);
  write_file(path, "# motion v1 n=2 count=1\n# joints a\n0.5 0.25\n");
  CHECK_THROWS_AS(read_motion(path), IoError);
  write_file(path, "0.5 0.25\n");
  CHECK_THROWS_AS(read_motion(path), IoError);
  std::remove(path.c_str());
}

TEST_CASE("retarget_stream maps corpus files frame by frame") {
  const RobotProfile& profile = fixtures::reachy_profile();
  RetargetConfig cfg = tiny_config();
  cfg.epochs = 1;
  const RetargetModel model = train_retarget(fixtures::paired_small(), profile, cfg);

  const std::string in_path = temp_path("remap_stream_in.txt");
  const std::string out_path = temp_path("remap_stream_out.txt");

  SUBCASE("empty stream stays empty") {
    write_corpus(in_path, {}, model.k);
    CHECK(retarget_stream(model, in_path, out_path) == 0);
    const MotionFile out = read_motion(out_path);
    CHECK(out.frames.empty());
    CHECK(out.joint_names == model.joint_names);
  }

  SUBCASE("one frame equals predict, repeats stay identical") {
    const HumanPose h = fixtures::paired_small().samples[7].h;
    write_corpus(in_path, {h, h, h}, model.k);
    CHECK(retarget_stream(model, in_path, out_path) == 3);
    const MotionFile out = read_motion(out_path);
    REQUIRE(out.frames.size() == 3);
    const JointVector want = predict(model, h).q;
    for (const auto& frame : out.frames) {
      CHECK((frame - want).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK((out.frames[0].array() == out.frames[1].array()).all());
  }

  SUBCASE("wrong body size is rejected") {
    write_corpus(in_path, {HumanPose::Random(6, 5)}, 5);
    CHECK_THROWS_AS(retarget_stream(model, in_path, out_path), DomainError);
  }

  std::remove(in_path.c_str());
  std::remove(out_path.c_str());
}
