#include "mstyle/features/layout.hpp"

#include <stdexcept>

namespace mstyle::features {

std::vector<std::string> FeatureLayout::input_channel_names(const std::vector<std::string>& joint_names) const {
  if (joint_names.size() != joints) {
    throw std::invalid_argument("joint name count does not match the feature layout");
  }
  std::vector<std::string> names;
  names.reserve(input_dim());
  for (const auto& j : joint_names) {
    for (const char* a : {"px", "py", "pz"}) {
      names.push_back(j + "." + a);
    }
  }
  for (const auto& j : joint_names) {
    for (const char* a : {"fx", "fy", "fz", "ux", "uy", "uz"}) {
      names.push_back(j + "." + a);
    }
  }
  for (const char* v : {"root.dx", "root.dz", "root.dyaw"}) {
    names.emplace_back(v);
  }
  for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
    const std::string s = "traj" + std::to_string(k);
    for (const char* a : {".px", ".pz", ".dx", ".dz"}) {
      names.push_back(s + a);
    }
  }
  for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
    const std::string s = "gait" + std::to_string(k);
    for (const char* a : {".stand", ".walk", ".run"}) {
      names.push_back(s + a);
    }
  }
  return names;
}

std::vector<std::string> FeatureLayout::output_channel_names(const std::vector<std::string>& joint_names) const {
  std::vector<std::string> names = input_channel_names(joint_names);
  names.emplace_back("phase.delta");
  return names;
}

}  // namespace mstyle::features
