#include "remap/checkpoint.hpp"

#include "remap/errors.hpp"
#include "remap/io.hpp"

namespace remap {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  }
  return arr;
}

Eigen::MatrixXd matrix_from_json(const json& arr, int rows, int cols, const std::string& what) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != rows * cols) {
    throw ConfigError("checkpoint " + what + ": expected " + std::to_string(rows * cols) +
                      " values, got " + std::to_string(arr.size()));
  }
  Eigen::MatrixXd m(rows, cols);
  size_t i = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = arr[i++].get<double>();
  }
  if (!m.allFinite()) throw ConfigError("checkpoint " + what + ": non-finite weight");
  return m;
}

}  // namespace

json mlp_to_json(const Mlp& net) {
  json j;
  j["input_dim"] = net.input_dim;
  j["hidden_dim"] = net.hidden_dim;
  j["output_dim"] = net.output_dim;
  j["activation"] = net.act == Activation::Gelu ? "gelu" : "identity";
  j["w1"] = matrix_to_json(net.w1);
  j["b1"] = matrix_to_json(net.b1);
  j["w2"] = matrix_to_json(net.w2);
  j["b2"] = matrix_to_json(net.b2);
  return j;
}

Mlp mlp_from_json(const json& j) {
  Mlp net;
  net.input_dim = j.at("input_dim").get<int>();
  net.hidden_dim = j.at("hidden_dim").get<int>();
  net.output_dim = j.at("output_dim").get<int>();
  if (net.input_dim <= 0 || net.hidden_dim <= 0 || net.output_dim <= 0) {
    throw ConfigError("checkpoint mlp: non-positive dimension");
  }
  const std::string act = j.at("activation").get<std::string>();
  if (act == "gelu") {
    net.act = Activation::Gelu;
  } else if (act == "identity") {
    net.act = Activation::Identity;
  } else {
    throw ConfigError("checkpoint mlp: unknown activation '" + act + "'");
  }
  net.w1 = matrix_from_json(j.at("w1"), net.hidden_dim, net.input_dim, "w1");
  net.b1 = matrix_from_json(j.at("b1"), net.hidden_dim, 1, "b1");
  net.w2 = matrix_from_json(j.at("w2"), net.output_dim, net.hidden_dim, "w2");
  net.b2 = matrix_from_json(j.at("b2"), net.output_dim, 1, "b2");
  return net;
}

void write_checkpoint(const std::string& path, const std::string& kind, const json& payload) {
  json envelope;
  envelope["kind"] = kind;
  envelope["tool_version"] = std::string(kToolVersion);
  const std::string body = payload.dump();
  envelope["content_hash"] = hash_hex(fnv1a64(body));
  envelope["payload"] = payload;
  write_file(path, envelope.dump(1) + "\n");
}

json read_checkpoint(const std::string& path, const std::string& kind) {
  json envelope;
  try {
    envelope = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
  if (envelope.value("kind", "") != kind) {
    throw ConfigError("checkpoint '" + path + "' is a '" + envelope.value("kind", "?") +
                      "', expected '" + kind + "'");
  }
  json payload = envelope.at("payload");
  const std::string expect = envelope.value("content_hash", "");
  const std::string got = hash_hex(fnv1a64(payload.dump()));
  if (expect != got) {
    throw ConfigError("checkpoint '" + path + "' failed its hash check (" + got + " vs " + expect +
                      ")");
  }
  return payload;
}

}  // namespace remap
