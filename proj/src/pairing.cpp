#include "remap/pairing.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "remap/errors.hpp"
#include "remap/io.hpp"

namespace remap {

std::vector<IkTarget> map_targets(const Eigen::Matrix3Xd& positions, const RobotProfile& profile,
                                  const ScaleTheta& theta) {
  if (!(theta.s > 0.0)) throw DomainError("map_targets: scale must be positive");
  if (positions.cols() != profile.chain.m()) {
    throw DomainError("map_targets: position count disagrees with the profile's chain");
  }
  std::vector<IkTarget> targets;
  targets.reserve(profile.human_joint_map.size());
  for (const auto& entry : profile.human_joint_map) {
    const int link = profile.chain.link_index(entry.robot_link);
    if (link < 0) {
      throw ConfigError("map_targets: profile maps unknown link '" + entry.robot_link + "'");
    }
    const auto over = theta.per_link.find(entry.robot_link);
    const double s = over == theta.per_link.end() ? theta.s : over->second;
    if (!(s > 0.0)) {
      throw DomainError("map_targets: per-link scale for '" + entry.robot_link +
                        "' must be positive");
    }
    targets.push_back({entry.human_joint, s * positions.col(link) + theta.t, entry.weight});
  }
  return targets;
}

Eigen::VectorXd PairedDataset::phis() const {
  Eigen::VectorXd out(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) out[static_cast<int>(i)] = samples[i].phi;
  return out;
}

PairedSample generate_one(const RobotProfile& profile, const PriorModel& prior,
                          const ReferenceBody& body, const ScaleTheta& theta, uint64_t seed,
                          const IkConfig& ik) {
  PairedSample out;
  out.seed = seed;
  out.q = sample_joint_vector(profile.chain, profile, seed);
  const RobotPose pose = forward_kinematics(profile.chain, out.q);
  out.r = pose.r;
  const IkResult solved = ik_solve(prior, body, map_targets(pose.p, profile, theta), ik);
  out.h = solved.pose;
  out.ik_residual = solved.mean_residual;
  out.phi = phi(prior, out.h);
  return out;
}

namespace {

void check_pairing_inputs(const RobotProfile& profile, const PriorModel& prior,
                          const ReferenceBody& body, const char* op) {
  if (!prior.trained) throw ConfigError(std::string(op) + ": the prior has not been trained");
  if (body.k() != prior.k) {
    throw ConfigError(std::string(op) + ": body and prior disagree on joint count");
  }
  if (profile.human_joint_map.empty()) {
    throw ConfigError(std::string(op) + ": profile maps no links");
  }
  for (const auto& entry : profile.human_joint_map) {
    if (profile.chain.link_index(entry.robot_link) < 0) {
      throw ConfigError(std::string(op) + ": profile maps unknown link '" + entry.robot_link +
                        "'");
    }
    if (entry.human_joint < 0 || entry.human_joint >= body.k()) {
      throw ConfigError(std::string(op) + ": mapped human joint out of range for '" +
                        entry.robot_link + "'");
    }
  }
}

DatasetProvenance make_provenance(const RobotProfile& profile, const PriorModel& prior,
                                  const ReferenceBody& body, const ScaleTheta& theta, int count,
                                  uint64_t base_seed, const IkConfig& ik) {
  DatasetProvenance p;
  p.tool_version = std::string(kToolVersion);
  p.profile_hash = profile.content_hash;
  p.prior_hash = prior_weights_hash(prior);
  p.theta = theta;
  p.base_seed = base_seed;
  p.requested = count;
  p.ik_route = ik_route_name(ik.route);
  p.ik_max_iters = ik.max_iters;
  p.n = profile.chain.n();
  p.m = profile.chain.m();
  p.k = body.k();
  return p;
}

}  // namespace

PairedDataset generate_pairs(const RobotProfile& profile, const PriorModel& prior,
                             const ReferenceBody& body, const ScaleTheta& theta, int count,
                             uint64_t base_seed, const PairingConfig& cfg) {
  if (count < 1) throw ConfigError("generate_pairs: count must be at least 1");
  check_pairing_inputs(profile, prior, body, "generate_pairs");

  PairedDataset out;
  out.provenance = make_provenance(profile, prior, body, theta, count, base_seed, cfg.ik);
  out.samples.resize(count);

  const int workers = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();
  std::atomic<bool> failed{false};
  std::string message;

#pragma omp parallel for schedule(dynamic, 4) num_threads(workers)
  for (int i = 0; i < count; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      out.samples[i] = generate_one(profile, prior, body, theta, derive_seed(base_seed, i), cfg.ik);
    } catch (const std::exception& e) {
      bool first = false;
      if (failed.compare_exchange_strong(first, true)) {
        message = std::string("generate_pairs: sample ") + std::to_string(i) + ": " + e.what();
      }
    }
  }
  if (failed.load()) throw NumericError(message);
  return out;
}

PairedDataset generate_pairs_serial(const RobotProfile& profile, const PriorModel& prior,
                                    const ReferenceBody& body, const ScaleTheta& theta, int count,
                                    uint64_t base_seed, const IkConfig& ik) {
  if (count < 1) throw ConfigError("generate_pairs: count must be at least 1");
  check_pairing_inputs(profile, prior, body, "generate_pairs");

  PairedDataset out;
  out.provenance = make_provenance(profile, prior, body, theta, count, base_seed, ik);
  out.samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.samples.push_back(generate_one(profile, prior, body, theta, derive_seed(base_seed, i), ik));
  }
  return out;
}

FilterResult filter_extreme(const PairedDataset& dataset, const Eigen::VectorXd& phi,
                            double residual_cap) {
  const auto count = static_cast<Eigen::Index>(dataset.samples.size());
  if (count < 2) throw ConfigError("filter_extreme: need at least 2 samples");
  if (phi.size() != count) {
    throw DomainError("filter_extreme: phi length disagrees with the dataset");
  }
  if (!(residual_cap > 0.0)) throw ConfigError("filter_extreme: residual cap must be positive");

  const double mean = phi.mean();
  const double var = (phi.array() - mean).square().sum() / static_cast<double>(count);
  const double tau = mean + std::sqrt(var);

  FilterResult result;
  result.tau = tau;
  result.kept.provenance = dataset.provenance;
  result.kept.samples.reserve(dataset.samples.size());
  for (Eigen::Index i = 0; i < count; ++i) {
    if (phi[i] > tau) {
      ++result.removed_by_phi;
    } else if (dataset.samples[i].ik_residual > residual_cap) {
      ++result.removed_by_residual;
    } else {
      result.kept.samples.push_back(dataset.samples[i]);
    }
  }
  result.removed_fraction = static_cast<double>(result.removed_by_phi) / static_cast<double>(count);
  result.kept.provenance.tau = tau;
  result.kept.provenance.residual_cap = residual_cap;
  result.kept.provenance.removed_fraction = result.removed_fraction;
  return result;
}

double resample_probability(double phi, double phi_min, double tau) {
  if (!(tau > phi_min)) return 1.0;
  const double x = std::clamp((phi - phi_min) / (tau - phi_min), 0.0, 1.0);
  return 1.0 - 0.5 * x;
}

BatchSampler::BatchSampler(const PairedDataset& dataset, uint64_t seed, bool weighted)
    : rng_(seed), weighted_(weighted) {
  const size_t count = dataset.samples.size();
  if (count == 0) throw ConfigError("BatchSampler: empty dataset");
  accept_.assign(count, 1.0);
  used_.assign(count, 0);
  if (!weighted_) return;

  double phi_min = std::numeric_limits<double>::infinity();
  double phi_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : dataset.samples) {
    phi_min = std::min(phi_min, s.phi);
    phi_max = std::max(phi_max, s.phi);
  }
  // A raw dataset carries no threshold; the observed spread stands in.
  const double tau = dataset.provenance.tau >= 0.0 ? dataset.provenance.tau : phi_max;
  for (size_t i = 0; i < count; ++i) {
    accept_[i] = resample_probability(dataset.samples[i].phi, phi_min, tau);
  }
}

std::vector<int> BatchSampler::next_batch(int batch_size) {
  if (batch_size <= 0) throw ConfigError("next_batch: batch size must be positive");
  if (batch_size > size()) {
    throw ConfigError("next_batch: batch size exceeds the dataset (" +
                      std::to_string(batch_size) + " > " + std::to_string(size()) + ")");
  }
  std::fill(used_.begin(), used_.end(), 0);
  std::vector<int> out;
  out.reserve(batch_size);
  while (static_cast<int>(out.size()) < batch_size) {
    const int i = rng_.uniform_int(size());
    if (used_[i]) continue;
    if (weighted_) {
      ++proposed_;
      if (rng_.uniform01() >= accept_[i]) continue;
      ++accepted_;
    }
    used_[i] = 1;
    out.push_back(i);
  }
  return out;
}

double BatchSampler::acceptance_rate() const {
  return proposed_ == 0 ? 1.0
                        : static_cast<double>(accepted_) / static_cast<double>(proposed_);
}

double BatchSampler::mean_acceptance_probability() const {
  double sum = 0.0;
  for (double p : accept_) sum += p;
  return sum / static_cast<double>(accept_.size());
}

ThetaSearchResult search_theta(const std::vector<CalibrationPair>& calibration,
                               const RobotProfile& profile, const PriorModel& prior,
                               const ReferenceBody& body, const ThetaRanges& ranges, int trials,
                               uint64_t seed, const IkConfig& ik) {
  if (calibration.empty()) throw ConfigError("search_theta: empty calibration set");
  if (trials < 1) throw ConfigError("search_theta: trials must be at least 1");
  if (!(ranges.s_min > 0.0) || ranges.s_max < ranges.s_min ||
      (ranges.t_max.array() < ranges.t_min.array()).any()) {
    throw ConfigError("search_theta: invalid theta ranges");
  }
  check_pairing_inputs(profile, prior, body, "search_theta");

  // Robot FK and the calibration body positions are theta-independent.
  std::vector<Eigen::Matrix3Xd> robot_pos, want_pos;
  robot_pos.reserve(calibration.size());
  want_pos.reserve(calibration.size());
  for (const auto& pair : calibration) {
    if (pair.q.size() != profile.chain.n()) {
      throw DomainError("search_theta: calibration q length disagrees with the chain");
    }
    if (pair.h.cols() != body.k()) {
      throw DomainError("search_theta: calibration pose disagrees with the body");
    }
    robot_pos.push_back(forward_kinematics(profile.chain, pair.q).p);
    want_pos.push_back(human_fk(body, pair.h));
  }

  std::vector<double> errors(trials, std::numeric_limits<double>::infinity());
  std::vector<ScaleTheta> thetas(trials);
  std::atomic<bool> failed{false};
  std::string message;

#pragma omp parallel for schedule(dynamic)
  for (int trial = 0; trial < trials; ++trial) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      Rng rng(derive_seed(seed, trial));
      ScaleTheta theta;
      theta.s = rng.uniform(ranges.s_min, ranges.s_max);
      for (int c = 0; c < 3; ++c) theta.t[c] = rng.uniform(ranges.t_min[c], ranges.t_max[c]);

      double err = 0.0;
      for (size_t p = 0; p < calibration.size(); ++p) {
        const IkResult solved =
            ik_solve(prior, body, map_targets(robot_pos[p], profile, theta), ik);
        const Eigen::Matrix3Xd got = human_fk(body, solved.pose);
        err += (got - want_pos[p]).colwise().norm().mean();
      }
      errors[trial] = err / static_cast<double>(calibration.size());
      thetas[trial] = theta;
    } catch (const std::exception& e) {
      bool first = false;
      if (failed.compare_exchange_strong(first, true)) {
        message = std::string("search_theta: trial ") + std::to_string(trial) + ": " + e.what();
      }
    }
  }
  if (failed.load()) throw NumericError(message);

  int best = 0;
  for (int trial = 1; trial < trials; ++trial) {
    if (errors[trial] < errors[best]) best = trial;
  }
  return {thetas[best], errors[best], best};
}

namespace {

void append_double(std::string& out, double v) {
  out += format_double(v);
  out += ' ';
}

ScaleTheta parse_theta_header(const std::vector<std::string_view>& tokens, const std::string& path) {
  // "# theta s=<v> t=<x> <y> <z>[ link:<name>=<v>]..."
  ScaleTheta theta;
  if (tokens.size() < 6 || tokens[1] != "theta" || tokens[2].substr(0, 2) != "s=" ||
      tokens[3].substr(0, 2) != "t=") {
    throw IoError("dataset '" + path + "': malformed theta header");
  }
  theta.s = parse_double(tokens[2].substr(2));
  theta.t[0] = parse_double(tokens[3].substr(2));
  theta.t[1] = parse_double(tokens[4]);
  theta.t[2] = parse_double(tokens[5]);
  for (size_t i = 6; i < tokens.size(); ++i) {
    const std::string_view tok = tokens[i];
    if (tok.substr(0, 5) != "link:") {
      throw IoError("dataset '" + path + "': malformed per-link scale '" + std::string(tok) + "'");
    }
    const size_t eq = tok.rfind('=');
    if (eq == std::string_view::npos || eq <= 5) {
      throw IoError("dataset '" + path + "': malformed per-link scale '" + std::string(tok) + "'");
    }
    theta.per_link[std::string(tok.substr(5, eq - 5))] = parse_double(tok.substr(eq + 1));
  }
  return theta;
}

std::string theta_header(const ScaleTheta& theta) {
  std::string line = "# theta s=" + format_double(theta.s) + " t=" + format_double(theta.t[0]) +
                     " " + format_double(theta.t[1]) + " " + format_double(theta.t[2]);
  for (const auto& [name, s] : theta.per_link) {
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigError("write_dataset: link name '" + name + "' contains whitespace");
    }
    line += " link:" + name + "=" + format_double(s);
  }
  return line;
}

std::string_view header_value(const std::vector<std::string_view>& tokens, std::string_view key,
                              const std::string& path) {
  for (const auto& tok : tokens) {
    if (tok.substr(0, key.size()) == key && tok.size() > key.size() && tok[key.size()] == '=') {
      return tok.substr(key.size() + 1);
    }
  }
  throw IoError("dataset '" + path + "': missing header field '" + std::string(key) + "'");
}

}  // namespace

void write_dataset(const std::string& path, const PairedDataset& dataset) {
  const DatasetProvenance& p = dataset.provenance;
  std::string out;
  out.reserve(dataset.samples.size() * (6 * (p.m + p.k) + p.n + 3) * 19 + 512);

  out += "# paired v1 n=" + std::to_string(p.n) + " m=" + std::to_string(p.m) +
         " k=" + std::to_string(p.k) + " count=" + std::to_string(dataset.samples.size()) + "\n";
  out += "# tool=" + p.tool_version + " profile_hash=" + hash_hex(p.profile_hash) +
         " prior_hash=" + hash_hex(p.prior_hash) + "\n";
  out += theta_header(p.theta) + "\n";
  out += "# gen base_seed=" + std::to_string(p.base_seed) +
         " requested=" + std::to_string(p.requested) + " ik_route=" + p.ik_route +
         " ik_iters=" + std::to_string(p.ik_max_iters) + "\n";
  if (p.tau >= 0.0) {
    out += "# filter tau=" + format_double(p.tau) +
           " residual_cap=" + format_double(p.residual_cap) +
           " removed_fraction=" + format_double(p.removed_fraction) + "\n";
  }

  for (const auto& s : dataset.samples) {
    if (s.q.size() != p.n || s.r.cols() != p.m || s.h.cols() != p.k) {
      throw DomainError("write_dataset: sample dimensions disagree with the provenance");
    }
    for (int i = 0; i < s.q.size(); ++i) append_double(out, s.q[i]);
    for (int c = 0; c < s.r.cols(); ++c) {
      for (int rr = 0; rr < 6; ++rr) append_double(out, s.r(rr, c));
    }
    for (int c = 0; c < s.h.cols(); ++c) {
      for (int rr = 0; rr < 6; ++rr) append_double(out, s.h(rr, c));
    }
    append_double(out, s.phi);
    append_double(out, s.ik_residual);
    out += std::to_string(s.seed);
    out += '\n';
  }
  write_file(path, out);
}

PairedDataset read_dataset(const std::string& path) {
  const std::string text = read_file(path);
  PairedDataset dataset;
  DatasetProvenance& p = dataset.provenance;

  size_t pos = 0;
  size_t line_no = 0;
  size_t expected = 0;
  bool sized = false;

  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  while (next_line(line)) {
    if (line.empty()) continue;
    if (line[0] != '#') {
      if (!sized) throw IoError("dataset '" + path + "': records before the header");
      // record line
      const auto tokens = split_ws(line);
      const size_t want = static_cast<size_t>(p.n) + 6 * static_cast<size_t>(p.m) +
                          6 * static_cast<size_t>(p.k) + 3;
      if (tokens.size() != want) {
        throw IoError("dataset '" + path + "', line " + std::to_string(line_no) + ": expected " +
                      std::to_string(want) + " fields, got " + std::to_string(tokens.size()));
      }
      PairedSample s;
      size_t t = 0;
      try {
        s.q.resize(p.n);
        for (int i = 0; i < p.n; ++i) s.q[i] = parse_double(tokens[t++]);
        s.r.resize(6, p.m);
        for (int c = 0; c < p.m; ++c) {
          for (int rr = 0; rr < 6; ++rr) s.r(rr, c) = parse_double(tokens[t++]);
        }
        s.h.resize(6, p.k);
        for (int c = 0; c < p.k; ++c) {
          for (int rr = 0; rr < 6; ++rr) s.h(rr, c) = parse_double(tokens[t++]);
        }
        s.phi = parse_double(tokens[t++]);
        s.ik_residual = parse_double(tokens[t++]);
        s.seed = parse_u64(tokens[t++]);
      } catch (const std::exception& e) {
        throw IoError("dataset '" + path + "', line " + std::to_string(line_no) + ": " + e.what());
      }
      dataset.samples.push_back(std::move(s));
      continue;
    }

    const auto tokens = split_ws(line);
    if (tokens.size() < 2) continue;
    if (tokens[1] == "paired") {
      if (tokens.size() < 3 || tokens[2] != "v1") {
        throw IoError("dataset '" + path + "': unsupported format version");
      }
      p.n = static_cast<int>(parse_u64(header_value(tokens, "n", path)));
      p.m = static_cast<int>(parse_u64(header_value(tokens, "m", path)));
      p.k = static_cast<int>(parse_u64(header_value(tokens, "k", path)));
      if (p.n < 1 || p.m < 1 || p.k < 1) {
        throw IoError("dataset '" + path + "': non-positive dimensions");
      }
      expected = parse_u64(header_value(tokens, "count", path));
      dataset.samples.reserve(expected);
      sized = true;
    } else if (tokens[1].substr(0, 5) == "tool=") {
      p.tool_version = std::string(tokens[1].substr(5));
      p.profile_hash = parse_u64_hex(header_value(tokens, "profile_hash", path));
      p.prior_hash = parse_u64_hex(header_value(tokens, "prior_hash", path));
    } else if (tokens[1] == "theta") {
      p.theta = parse_theta_header(tokens, path);
    } else if (tokens[1] == "gen") {
      p.base_seed = parse_u64(header_value(tokens, "base_seed", path));
      p.requested = static_cast<int>(parse_u64(header_value(tokens, "requested", path)));
      p.ik_route = std::string(header_value(tokens, "ik_route", path));
      p.ik_max_iters = static_cast<int>(parse_u64(header_value(tokens, "ik_iters", path)));
    } else if (tokens[1] == "filter") {
      p.tau = parse_double(header_value(tokens, "tau", path));
      p.residual_cap = parse_double(header_value(tokens, "residual_cap", path));
      p.removed_fraction = parse_double(header_value(tokens, "removed_fraction", path));
    } else {
      throw IoError("dataset '" + path + "': unknown header line " + std::to_string(line_no));
    }
  }
  if (!sized) throw IoError("dataset '" + path + "': missing 'paired' header");
  if (dataset.samples.size() != expected) {
    throw IoError("dataset '" + path + "': header promises " + std::to_string(expected) +
                  " samples, found " + std::to_string(dataset.samples.size()));
  }
  return dataset;
}

void verify_dataset(const PairedDataset& dataset, const RobotProfile& profile) {
  const DatasetProvenance& p = dataset.provenance;
  if (p.profile_hash != profile.content_hash) {
    throw ConfigError("verify_dataset: dataset was generated against a different profile (" +
                      hash_hex(p.profile_hash) + " vs " + hash_hex(profile.content_hash) + ")");
  }
  if (p.n != profile.chain.n() || p.m != profile.chain.m()) {
    throw ConfigError("verify_dataset: provenance dimensions disagree with the chain");
  }
  std::unordered_set<uint64_t> seen;
  seen.reserve(dataset.samples.size());
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const PairedSample& s = dataset.samples[i];
    const std::string at = "verify_dataset: sample " + std::to_string(i);
    if (s.q.size() != p.n || s.r.cols() != p.m || s.h.cols() != p.k) {
      throw DomainError(at + ": dimensions disagree with the provenance");
    }
    if (!s.q.allFinite() || !s.r.allFinite() || !s.h.allFinite()) {
      throw DomainError(at + ": non-finite values");
    }
    if (!std::isfinite(s.phi) || s.phi < 0.0 || !std::isfinite(s.ik_residual) ||
        s.ik_residual < 0.0) {
      throw DomainError(at + ": invalid phi or residual");
    }
    if (!seen.insert(s.seed).second) {
      throw DomainError(at + ": duplicate seed " + std::to_string(s.seed));
    }
    const RobotPose fk = forward_kinematics(profile.chain, s.q);
    const double defect = (fk.r - s.r).cwiseAbs().maxCoeff();
    if (defect > 1e-9) {
      throw DomainError(at + ": stored orientations disagree with FK (defect " +
                        format_double(defect) + ")");
    }
  }
}

void write_calibration(const std::string& path, const std::vector<CalibrationPair>& pairs) {
  if (pairs.empty()) throw ConfigError("write_calibration: no pairs");
  const int n = static_cast<int>(pairs.front().q.size());
  const int k = static_cast<int>(pairs.front().h.cols());
  std::string out = "# calibration v1 n=" + std::to_string(n) + " k=" + std::to_string(k) +
                    " count=" + std::to_string(pairs.size()) + "\n";
  for (const auto& pair : pairs) {
    if (pair.q.size() != n || pair.h.cols() != k) {
      throw DomainError("write_calibration: inconsistent pair dimensions");
    }
    for (int i = 0; i < n; ++i) append_double(out, pair.q[i]);
    for (int c = 0; c < k; ++c) {
      for (int rr = 0; rr < 6; ++rr) append_double(out, pair.h(rr, c));
    }
    out.pop_back();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<CalibrationPair> read_calibration(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<CalibrationPair> pairs;
  int n = -1, k = -1;
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
      if (tokens.size() < 3 || tokens[1] != "calibration" || tokens[2] != "v1") {
        throw IoError("calibration '" + path + "': unsupported header");
      }
      n = static_cast<int>(parse_u64(header_value(tokens, "n", path)));
      k = static_cast<int>(parse_u64(header_value(tokens, "k", path)));
      expected = parse_u64(header_value(tokens, "count", path));
      continue;
    }
    if (n < 0) throw IoError("calibration '" + path + "': records before the header");
    if (tokens.size() != static_cast<size_t>(n) + 6 * static_cast<size_t>(k)) {
      throw IoError("calibration '" + path + "', line " + std::to_string(line_no) +
                    ": wrong field count");
    }
    CalibrationPair pair;
    pair.q.resize(n);
    pair.h.resize(6, k);
    size_t t = 0;
    for (int i = 0; i < n; ++i) pair.q[i] = parse_double(tokens[t++]);
    for (int c = 0; c < k; ++c) {
      for (int rr = 0; rr < 6; ++rr) pair.h(rr, c) = parse_double(tokens[t++]);
    }
    pairs.push_back(std::move(pair));
  }
  if (n < 0) throw IoError("calibration '" + path + "': missing header");
  if (pairs.size() != expected) {
    throw IoError("calibration '" + path + "': header promises " + std::to_string(expected) +
                  " pairs, found " + std::to_string(pairs.size()));
  }
  return pairs;
}

}  // namespace remap
