#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "instanton/autodiff/adam.hpp"
#include "instanton/autodiff/network.hpp"

namespace instanton::ad {

/// Named networks plus the optimizer state that trains them jointly.
struct Checkpoint {
  std::map<std::string, FeedForwardNet> networks;
  AdamState optimizer;
  std::int64_t iteration = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json network_to_json(const FeedForwardNet& net);
FeedForwardNet network_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace instanton::ad
