#include "eval.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "citysim/error.hpp"
#include "citysim/task_io.hpp"

namespace citysim::tools {

namespace {

void read_results(const std::filesystem::path& file, const std::string& model, std::vector<std::string>& order,
                  std::map<std::string, std::vector<EpisodeResult>>& groups) {
  std::istringstream in(read_file(file));
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::schema_error, file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string m = j.is_object() && j.contains("model") ? j["model"].get<std::string>() : model;
    if (!groups.count(m)) order.push_back(m);
    try {
      groups[m].push_back(result_from(j));
    } catch (const Error& e) {
      throw Error(e.code(), file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<MetricsReport> evaluate_logs(const std::vector<std::filesystem::path>& inputs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<EpisodeResult>> groups;
  for (const auto& p : inputs) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        const std::string name = e.path().filename().string();
        if (name.size() > 12 && name.ends_with(".result.json")) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      const std::string model = p.filename().empty() ? p.parent_path().filename().string() : p.filename().string();
      for (const auto& f : files) read_results(f, model, order, groups);
    } else {
      read_results(p, p.stem().string(), order, groups);
    }
  }
  if (order.empty()) throw Error(ErrorCode::empty_input, "no episode results found");
  std::vector<MetricsReport> rows;
  for (const std::string& m : order) rows.push_back(aggregate_report(groups[m], m));
  return rows;
}

}  // namespace citysim::tools
