#include "citysim/episode.hpp"

#include "citysim/error.hpp"

namespace citysim {

std::string_view status_name(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::running: return "running";
    case EpisodeStatus::success: return "success";
    case EpisodeStatus::failure: return "failure";
  }
  return "running";
}

Episode::Episode(const CityMap& map, MMNavTask task, EnvConfig config)
    : kind_(TaskKind::mmnav), mmnav_(std::move(task)), world_(map, std::move(config)), buffer_(world_) {
  world_.add_robot(mmnav_->start);
  inbox_.resize(1);
}

Episode::Episode(const CityMap& map, MRSTask task, EnvConfig config)
    : kind_(TaskKind::mrs), mrs_(std::move(task)), world_(map, std::move(config)), buffer_(world_) {
  world_.add_robot(mrs_->spawn_main);
  world_.add_robot(mrs_->spawn_follower);
  inbox_.resize(2);
}

const Subtask* Episode::current() const {
  if (!mmnav_ || completed_ >= mmnav_->subtasks.size()) return nullptr;
  return &mmnav_->subtasks[completed_];
}

int Episode::budget() const { return mmnav_ ? mmnav_->step_budget : mrs_->step_budget; }

void Episode::submit(std::uint32_t agent, RobotAction action) {
  if (done()) throw Error(ErrorCode::bad_request, "episode is over: " + std::string(status_name(status_)));
  buffer_.submit(agent, std::move(action));
}

std::vector<LogRecord> Episode::poll() {
  std::vector<LogRecord> out;
  for (const Completion& c : buffer_.poll()) {
    LogRecord r;
    r.tick = c.tick;
    r.agent = c.agent;
    r.action = c.action;
    r.events = c.events;
    r.pose = c.after;
    r.start = c.start;
    r.end = c.end;
    apply(r, c);
    log_.push_back(r);
    out.push_back(std::move(r));
  }
  return out;
}

LogRecord Episode::step(std::uint32_t agent, RobotAction action) {
  submit(agent, std::move(action));
  for (;;) {
    for (LogRecord& r : poll()) {
      if (r.agent == agent) return r;
    }
  }
}

void Episode::apply(LogRecord& r, const Completion& c) {
  for (const SafetyEvent& e : c.events) safety_.add(e);
  const bool live = status_ == EpisodeStatus::running;
  switch (c.action.kind) {
    case ActionKind::evaluate:
      if (!live || !mmnav_) {
        r.outcome = "noop";
      } else if (check_subtask_success(world_, c.agent, mmnav_->subtasks[completed_])) {
        r.outcome = "success";
        if (++completed_ == mmnav_->subtasks.size()) status_ = EpisodeStatus::success;
      } else {
        r.outcome = "failure";
        status_ = EpisodeStatus::failure;
      }
      break;
    case ActionKind::check_task_complete:
      if (!live || !mrs_) {
        r.outcome = "noop";
      } else if (check_meetup(world_, c.agent, 1 - c.agent)) {
        r.outcome = "success";
        met_ = true;
        status_ = EpisodeStatus::success;
      } else {
        r.outcome = "failure";
        status_ = EpisodeStatus::failure;
      }
      break;
    case ActionKind::send_message:
      if (mrs_) {
        inbox_[1 - c.agent].push_back({c.agent, c.action.text, c.tick});
        r.outcome = "delivered";
      } else {
        r.outcome = "noop";
      }
      break;
    default:
      if (is_translation(c.action.kind)) {
        const double moved = manhattan(c.before.position, c.after.position);
        r.outcome = moved + 1e-9 < world_.config().step_length ? "blocked" : "ok";
      } else {
        r.outcome = "ok";
      }
      break;
  }
  ++steps_;
  if (status_ == EpisodeStatus::running && steps_ >= budget()) status_ = EpisodeStatus::failure;
}

std::vector<Message> Episode::take_messages(std::uint32_t agent) {
  world_.robot(agent);
  std::vector<Message> out;
  out.swap(inbox_[agent]);
  return out;
}

EpisodeResult Episode::result() const {
  EpisodeResult e;
  e.kind = kind_;
  e.success = status_ == EpisodeStatus::success;
  e.safety = safety_;
  e.steps = steps_;
  if (mmnav_) {
    e.task = mmnav_->id;
    e.subtasks = static_cast<int>(mmnav_->subtasks.size());
    e.completed = static_cast<int>(completed_);
    const Vec2 goal = mmnav_->final_goal().pose.position;
    e.d0 = manhattan(mmnav_->start.position, goal);
    e.dT = manhattan(world_.robot(0).pose.position, goal);
  } else {
    e.task = mrs_->id;
    e.met = met_;
    e.D0 = manhattan(mrs_->spawn_main.position, mrs_->spawn_follower.position);
    e.DT = manhattan(world_.robot(0).pose.position, world_.robot(1).pose.position);
  }
  return e;
}

}  // namespace citysim
