#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoad/nn/tensor.hpp"

namespace autoad::nn {

// Single-file binary checkpoint: a JSON config echo followed by the
// parameters in collection order (names and shapes are verified on load).
void save_checkpoint(const std::filesystem::path& file,
                     const std::vector<Parameter*>& params,
                     const nlohmann::json& config);

nlohmann::json load_checkpoint(const std::filesystem::path& file,
                               const std::vector<Parameter*>& params);

nlohmann::json peek_checkpoint_config(const std::filesystem::path& file);

}  // namespace autoad::nn
