#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "citysim/dataset.hpp"
#include "citysim/error.hpp"
#include "fixtures.hpp"

using namespace citysim;
using namespace citysim::test;

namespace {

Subtask straight(Vec2 goal) {
  Subtask s;
  s.kind = SubtaskKind::move_along_road;
  s.goal.pose = {goal, 0.0};
  s.instruction = "walk north";
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "citysim-test" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("supervision on a straight stretch") {
  const CityMap map = test_map({});
  const Subtask s = straight({190, 80});
  const Vec2 targets[] = {{190, 80}};
  const Supervision far = annotate_step(map, {{190, 30}, 0.0}, s, targets);
  CHECK(far.distance == 50.0);
  CHECK(far.orientation == Cardinal::N);
  REQUIRE(far.remaining.size() == 11);
  for (int i = 0; i < 10; ++i) CHECK(far.remaining[i] == ActionKind::move_forward);
  CHECK(far.remaining.back() == ActionKind::evaluate);

  const Supervision near = annotate_step(map, {{190, 75}, 0.0}, s, targets);
  CHECK(near.remaining == std::vector{ActionKind::move_forward, ActionKind::evaluate});

  const Supervision at = annotate_step(map, {{190, 80}, 0.0}, s, targets);
  CHECK(at.distance == 0.0);
  CHECK(at.remaining.empty());

  // Facing away: two quarter turns come before the walk.
  const Supervision back = annotate_step(map, {{190, 75}, 180.0}, s, targets);
  REQUIRE(back.remaining.size() == 4);
  CHECK(is_rotation(back.remaining[0]));
  CHECK(back.remaining[1] == back.remaining[0]);
  CHECK(back.remaining[2] == ActionKind::move_forward);
}

TEST_CASE("rollout records replay to their goals") {
  const CityMap map = generate_city(variant_for(seeded(60), Difficulty::easy));
  World w(map);
  Rng rng(derive_seed(60, Stream::tasks));
  const MMNavTask task = generate_mmnav_task(w, rng, Difficulty::easy);
  const Rollout r = rollout_oracle(map, task);
  CHECK(r.result.success);
  REQUIRE(r.records.size() == r.actions.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const StepRecord& s = r.records[i];
    CHECK(s.step == static_cast<int>(i));
    CHECK(s.action == r.actions[i]);
    const std::size_t left = r.actions.size() - i - (s.supervision.remaining.empty() ? 1 : 0);
    CHECK(s.supervision.remaining_task.size() == left);
    if (!s.supervision.remaining.empty()) CHECK(s.supervision.remaining.front() == s.action.kind);
    const StepRecord back = step_record_from(Json::parse(to_json(s).dump()));
    CHECK(to_json(back) == to_json(s));
  }
  CHECK(r.records.front().supervision.remaining_task.size() == r.actions.size());
  CHECK(r.records.back().supervision.remaining.empty());

  const auto dir = scratch("one-map");
  const DatasetManifest m = export_tasks(map, std::span(&task, 1), dir);
  CHECK(m.trajectories == 1);
  CHECK(m.steps == static_cast<std::int64_t>(r.records.size()));
  const DatasetReport rep = validate_dataset(dir, 2);
  for (const auto& msg : rep.messages) MESSAGE(msg);
  CHECK(rep.ok());
  CHECK(rep.records == m.steps);
}

TEST_CASE("small export validates and catches tampering") {
  DatasetConfig c;
  c.seed = 7;
  c.maps = 3;
  c.tasks_per_map = 2;
  c.min_steps = 60;
  const auto dir = scratch("small");
  const DatasetManifest m = export_dataset(c, dir);
  CHECK(m.maps == 3);
  CHECK(m.trajectories == 6);
  CHECK(m.steps >= 6 * 60);
  DatasetReport rep = validate_dataset(dir);
  for (const auto& msg : rep.messages) MESSAGE(msg);
  CHECK(rep.ok());
  CHECK(rep.records == m.steps);
  CHECK(rep.test_only_assets == 0);

  // Same seed, same bytes, whatever the thread count.
  DatasetConfig single = c;
  single.threads = 1;
  const auto dir1 = scratch("small-1");
  export_dataset(single, dir1);
  CHECK(read_file(dir / "records.jsonl") == read_file(dir1 / "records.jsonl"));

  // Drop the first remaining action of some record: replay misses the goal.
  std::string text = read_file(dir / "records.jsonl");
  const std::string needle = "\"remaining\":[\"move_forward\",";
  const auto at = text.find(needle);
  REQUIRE(at != std::string::npos);
  text.replace(at, needle.size(), "\"remaining\":[");
  write_file(dir / "records.jsonl", text);
  rep = validate_dataset(dir);
  CHECK_FALSE(rep.ok());

  Json man = Json::parse(read_file(dir1 / "manifest.json"));
  man["steps"] = man["steps"].get<std::int64_t>() + 1;
  write_file(dir1 / "manifest.json", man.dump());
  CHECK_FALSE(validate_dataset(dir1).ok());
}

TEST_CASE("dataset maps draw from the training assets") {
  DatasetConfig c;
  for (int i = 0; i < 5; ++i) {
    const CityMap map = generate_city(dataset_map_spec(c, i));
    for (const Building& b : map.buildings) CHECK_FALSE(find_asset(b.asset)->test_only);
  }
  c.maps = 0;
  CHECK_THROWS_AS(export_dataset(c, scratch("none")), Error);
}
