#include <doctest.h>

#include <filesystem>

#include "citysim/error.hpp"
#include "citysim/oracle.hpp"
#include "citysim/task_io.hpp"
#include "fixtures.hpp"

using namespace citysim;
using namespace citysim::test;

namespace {

struct Bench {
  CityMap map;
  MMNavTask mmnav;
  MRSTask mrs;
};

Bench bench(std::uint64_t seed, Difficulty d = Difficulty::easy) {
  Bench b{generate_city(variant_for(seeded(seed), d)), {}, {}};
  World w(b.map);
  Rng rng(derive_seed(seed, Stream::tasks));
  b.mmnav = generate_mmnav_task(w, rng, d);
  b.mrs = generate_mrs_task(w, rng, d);
  return b;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "citysim-test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Drives a policy and records every submission with the poll it preceded.
template <class Policy>
Transcript record(const CityMap& map, const AnyTask& task, Policy&& policy) {
  Transcript t;
  t.task = {task, map_hash(map)};
  auto ep = make_episode(map, task, t.config);
  while (!ep->done()) {
    for (std::uint32_t a = 0; a < ep->agents() && !ep->done(); ++a) {
      if (!ep->buffer().available(a)) continue;
      if (auto action = policy(*ep, a)) {
        t.entries.push_back({ep->buffer().polls(), a, *action});
        ep->submit(a, *action);
      }
    }
    ep->poll();
  }
  while (!ep->buffer().idle()) ep->poll();
  for (std::uint32_t a = 0; a < ep->agents(); ++a) t.final_poses.push_back(ep->world().robot(a).pose);
  t.status = ep->status();
  t.log_hash = log_hash(ep->log());
  return t;
}

}  // namespace

TEST_CASE("scan and pose round trip bit for bit") {
  const Bench b = bench(50, Difficulty::hard);
  World w(b.map);
  const auto id = w.add_robot(b.mmnav.start);
  for (LookView v : {LookView::level, LookView::up, LookView::down}) {
    const Scan s = w.observe(id, v);
    const Json j = to_json(s);
    const Scan back = scan_from(Json::parse(j.dump()));
    CHECK(back == s);
    CHECK(to_json(back).dump() == j.dump());
  }
  const Pose p{{0.1 + 0.2, -1e-300}, 359.99999999999994};
  CHECK(pose_from(Json::parse(to_json(p).dump())) == p);
  CHECK_THROWS_AS(pose_from(Json::parse(R"({"position":[1],"heading":0})")), Error);
  CHECK_THROWS_AS(scan_from(Json::object()), Error);
}

TEST_CASE("actions and log records round trip") {
  const RobotAction a{ActionKind::send_message, LookView::level, "meet at the bakery"};
  CHECK(action_from(to_json(a)) == a);
  const RobotAction look{ActionKind::look, LookView::down, {}};
  CHECK(action_from(to_json(look)) == look);
  CHECK_THROWS_AS(action_from(Json{{"action", "fly"}}), Error);

  const Bench b = bench(51);
  Episode ep(b.map, b.mmnav);
  run_random(ep, 3);
  for (const LogRecord& r : ep.log()) {
    const LogRecord back = log_record_from(Json::parse(to_json(r).dump()));
    CHECK(to_json(back) == to_json(r));
  }
  const EpisodeResult res = ep.result();
  CHECK(to_json(result_from(to_json(res))) == to_json(res));
}

TEST_CASE("task files") {
  const Bench b = bench(52);
  const std::uint64_t hash = map_hash(b.map);
  for (const AnyTask& task : {AnyTask(b.mmnav), AnyTask(b.mrs)}) {
    const auto path = scratch("task.json");
    save_task(task, hash, path);
    const TaskFile f = load_task(path);
    CHECK(f.map_hash == hash);
    CHECK(f.task.index() == task.index());
    std::visit([&](const auto& t) { CHECK(std::visit([](const auto& u) { return to_json(u, 0); }, f.task) == to_json(t, 0)); },
               task);
    CHECK(map_hash(map_for_task(f)) == hash);
    TaskFile wrong = f;
    wrong.map_hash ^= 1;
    CHECK_THROWS_AS(map_for_task(wrong), Error);
  }
  Json j = to_json(b.mmnav, hash);
  j["schema"] = "something.else";
  CHECK_THROWS_AS(task_from_json(j), Error);
  j = to_json(b.mmnav, hash);
  j["version"] = 99;
  CHECK_THROWS_AS(task_from_json(j), Error);
}

TEST_CASE("env config overrides") {
  EnvConfig base;
  base.ray_count = 32;
  const EnvConfig c = env_config_from(Json{{"fov", 60.0}, {"traffic", {{"vehicle_radius", 1.5}}}}, base);
  CHECK(c.fov == 60.0);
  CHECK(c.ray_count == 32);
  CHECK(c.traffic.vehicle_radius == 1.5);
  CHECK(to_json(env_config_from(to_json(c))) == to_json(c));
  CHECK_THROWS_AS(env_config_from(Json{{"fov", "wide"}}), Error);
}

TEST_CASE("transcripts replay to the same state") {
  const Bench b = bench(53, Difficulty::hard);
  MMNavOracle nav(b.mmnav);
  const Transcript t = record(b.map, b.mmnav, [&](Episode& ep, std::uint32_t) { return std::optional(nav.next(ep)); });
  CHECK(t.status == EpisodeStatus::success);
  const Transcript back = transcript_from(Json::parse(to_json(t).dump()));
  CHECK(back.entries.size() == t.entries.size());
  for (int i = 0; i < 2; ++i) {
    const ReplayResult r = replay(b.map, back);
    CHECK(r.final_poses == t.final_poses);
    CHECK(r.status == t.status);
    CHECK(r.log_hash == t.log_hash);
  }

  const World w(b.map);
  MRSOracle mrs(b.mrs, w);
  const Transcript m = record(b.map, b.mrs, [&](Episode& ep, std::uint32_t a) { return mrs.next(ep, a); });
  const ReplayResult r = replay(b.map, transcript_from(to_json(m)));
  CHECK(r.final_poses == m.final_poses);
  CHECK(r.log_hash == m.log_hash);
  REQUIRE(r.final_poses.size() == 2);
}
