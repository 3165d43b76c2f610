#include "instanton/autodiff/checkpoint.hpp"

#include <fstream>
#include <vector>

namespace instanton::ad {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "instanton-checkpoint";
constexpr int kVersion = 1;

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j, const char* field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(key, "missing from checkpoint");
  return j.at(key);
}

}  // namespace

json network_to_json(const FeedForwardNet& net) {
  json weights = json::array();
  json biases = json::array();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.weight(l);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    weights.push_back(flat);
    biases.push_back(vector_to_json(net.bias(l)));
  }
  return json{{"layer_sizes", net.layer_sizes()},
              {"activation", to_string(net.activation())},
              {"output_transform", to_string(net.output_transform())},
              {"weights", weights},
              {"biases", biases}};
}

FeedForwardNet network_from_json(const json& j) {
  const auto sizes = require(j, "layer_sizes").get<std::vector<int>>();
  FeedForwardNet net(sizes, output_transform_from_string(require(j, "output_transform").get<std::string>()),
                     activation_from_string(require(j, "activation").get<std::string>()));
  const json& weights = require(j, "weights");
  const json& biases = require(j, "biases");
  if (weights.size() != net.layer_count() || biases.size() != net.layer_count()) {
    throw ConfigError("weights", "layer count does not match layer_sizes");
  }
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Vector flat = vector_from_json(weights[l], "weights");
    Matrix& w = net.weight(l);
    if (flat.size() != w.size()) throw ShapeError("checkpoint weight " + std::to_string(l) + " has the wrong size");
    for (Eigen::Index r = 0, k = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat(k++);
    }
    const Vector b = vector_from_json(biases[l], "biases");
    if (b.size() != net.bias(l).size()) throw ShapeError("checkpoint bias " + std::to_string(l) + " has the wrong size");
    net.bias(l) = b;
  }
  return net;
}

json checkpoint_to_json(const Checkpoint& c) {
  json nets = json::object();
  for (const auto& [name, net] : c.networks) nets[name] = network_to_json(net);
  const AdamState& o = c.optimizer;
  return json{{"format", kFormat},
              {"version", kVersion},
              {"iteration", c.iteration},
              {"networks", nets},
              {"optimizer",
               {{"learning_rate", o.learning_rate},
                {"beta1", o.beta1},
                {"beta2", o.beta2},
                {"epsilon", o.epsilon},
                {"step_count", o.step_count},
                {"first_moment", vector_to_json(o.first_moment)},
                {"second_moment", vector_to_json(o.second_moment)}}},
              {"metadata", c.metadata}};
}

Checkpoint checkpoint_from_json(const json& j) {
  if (require(j, "format").get<std::string>() != kFormat) throw ConfigError("format", "not an instanton checkpoint");
  if (require(j, "version").get<int>() != kVersion) throw ConfigError("version", "unsupported checkpoint version");
  Checkpoint c;
  c.iteration = require(j, "iteration").get<std::int64_t>();
  for (const auto& [name, net] : require(j, "networks").items()) c.networks.emplace(name, network_from_json(net));
  const json& o = require(j, "optimizer");
  c.optimizer.learning_rate = require(o, "learning_rate").get<double>();
  c.optimizer.beta1 = require(o, "beta1").get<double>();
  c.optimizer.beta2 = require(o, "beta2").get<double>();
  c.optimizer.epsilon = require(o, "epsilon").get<double>();
  c.optimizer.step_count = require(o, "step_count").get<std::int64_t>();
  c.optimizer.first_moment = vector_from_json(require(o, "first_moment"), "first_moment");
  c.optimizer.second_moment = vector_from_json(require(o, "second_moment"), "second_moment");
  if (c.optimizer.first_moment.size() != c.optimizer.second_moment.size()) {
    throw ShapeError("optimizer moments differ in length");
  }
  if (j.contains("metadata")) c.metadata = j.at("metadata");
  return c;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& c) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write checkpoint " + file.string());
  out << checkpoint_to_json(c).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot read checkpoint " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0);
  }
  return checkpoint_from_json(j);
}

}  // namespace instanton::ad
