#pragma once

#include <filesystem>
#include <vector>

#include "citysim/metrics.hpp"

namespace citysim::tools {

// Episode results grouped into one report per model. A file holds one result
// per line; a directory contributes its *.result.json files. The model is the
// line's "model" field, else the file stem (directory name for directories).
std::vector<MetricsReport> evaluate_logs(const std::vector<std::filesystem::path>& inputs);

}  // namespace citysim::tools
