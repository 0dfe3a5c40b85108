#ifndef OPBIL_CHECKPOINT_HPP
#define OPBIL_CHECKPOINT_HPP

#include "opbil/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace opbil {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File layout: one line of JSON (spec, seed, epoch, parameter names and
/// shapes, blob size) then the parameters as little-endian float64 in
/// declaration order.
void save_checkpoint(const std::filesystem::path& path, const Model& model, int epoch);

struct LoadedCheckpoint {
  Model model;
  int epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& text);

}  // namespace opbil

#endif  // OPBIL_CHECKPOINT_HPP
