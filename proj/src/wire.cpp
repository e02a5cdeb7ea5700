#include "palmpipe/wire.hpp"

#include <ostream>

namespace palmpipe::wire {

namespace {

template <std::size_t R, std::size_t C, typename T>
Json grid_json(const Grid<R, C, T>& g) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < R; ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < C; ++c) row.push_back(g(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<PositionClass> position_from_string(std::string_view s) {
  if (s == "center") return PositionClass::Center;
  if (s == "left") return PositionClass::Left;
  if (s == "right") return PositionClass::Right;
  return std::nullopt;
}

}  // namespace

std::variant<PoseCommand, ParseError> parse_pose_command(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    return ParseError{std::string("invalid JSON: ") + e.what()};
  }
  if (!j.is_object()) return ParseError{"message must be a JSON object"};
  if (!j.contains("type") || j["type"] != "set_pose") return ParseError{"type must be \"set_pose\""};
  for (const char* key : {"angle_deg", "position", "grip_step", "mode"}) {
    if (!j.contains(key)) return ParseError{std::string("missing field ") + key};
  }

  PoseCommand cmd;
  const auto& angle = j["angle_deg"];
  if (!angle.is_number_integer()) return ParseError{"angle_deg must be one of 0, 45, 90, 135"};
  try {
    cmd.angle = angle_from_degrees(angle.get<int>());
  } catch (const std::out_of_range&) {
    return ParseError{"angle_deg must be one of 0, 45, 90, 135"};
  }

  const auto& pos = j["position"];
  const auto position = pos.is_string() ? position_from_string(pos.get<std::string>()) : std::nullopt;
  if (!position) return ParseError{"position must be \"center\", \"left\" or \"right\""};
  cmd.position = *position;

  const auto& grip = j["grip_step"];
  if (!grip.is_number_integer() || grip.get<long long>() < 0 || grip.get<long long>() > kMaxGripStep) {
    return ParseError{"grip_step must be an integer in [0, 30]"};
  }
  cmd.grip_step = grip.get<int>();

  const auto& mode = j["mode"];
  if (mode == "direct") {
    cmd.mode = PipelineMode::direct();
  } else if (mode == "masked") {
    cmd.mode = PipelineMode::masked();
  } else {
    return ParseError{"mode must be \"direct\" or \"masked\""};
  }
  return cmd;
}

std::string to_json(const PoseCommand& cmd) {
  Json j;
  j["type"] = "set_pose";
  j["angle_deg"] = degrees(cmd.angle);
  j["position"] = std::string(to_string(cmd.position));
  j["grip_step"] = cmd.grip_step;
  j["mode"] = cmd.mode.is_masked() ? "masked" : "direct";
  return j.dump();
}

Json tick_message(const TickSnapshot& snap) {
  Json j;
  j["type"] = "tick";
  j["tick"] = snap.tick;
  j["merged"] = grid_json(snap.merged.grid());
  j["downsized"] = grid_json(snap.downsized);
  if (snap.prediction) {
    Json p;
    p["angle_deg"] = degrees(snap.prediction->angle);
    p["position"] = std::string(to_string(snap.prediction->position));
    p["pattern_id"] = snap.prediction->pattern.value();
    j["prediction"] = std::move(p);
  } else {
    j["prediction"] = nullptr;
  }
  j["mask"] = snap.mask ? grid_json(*snap.mask) : Json(nullptr);
  j["stimulus"] = grid_json(snap.stimulus.grid());
  Json contacts = Json::array();
  for (const auto& c : snap.contacts) {
    Json cj;
    cj["x_mm"] = c.target.x;
    cj["y_mm"] = c.target.y;
    cj["tau_a"] = c.angles.tau_a;
    cj["tau_e"] = c.angles.tau_e;
    cj["active"] = c.active;
    contacts.push_back(std::move(cj));
  }
  j["contacts"] = std::move(contacts);
  j["latency_ms"] = snap.latency.total;
  return j;
}

Json log_record(const TickSnapshot& snap) {
  Json j = tick_message(snap);
  j.erase("type");
  j["mode"] = to_string(snap.mode);
  j["timestamp"] = snap.frame.timestamp;
  Json stages;
  stages["merge"] = snap.latency.merge;
  stages["resize"] = snap.latency.resize;
  stages["cnn"] = snap.latency.cnn ? Json(*snap.latency.cnn) : Json(nullptr);
  stages["mask"] = snap.latency.mask;
  stages["ik"] = snap.latency.ik;
  stages["total"] = snap.latency.total;
  j["stages_ms"] = std::move(stages);
  return j;
}

Json error_message(std::string_view message) {
  Json j;
  j["type"] = "error";
  j["message"] = std::string(message);
  return j;
}

Json run_report_json(const RunReport& r) {
  Json j;
  j["ticks"] = r.ticks;
  j["frames_produced"] = r.frames_produced;
  j["frames_consumed"] = r.frames_consumed;
  j["dropped_frames"] = r.dropped_frames;
  j["starved_ticks"] = r.starved_ticks;
  j["starvation"] = r.starvation;
  j["overruns"] = r.overruns;
  j["latency_ms"] = {{"p50", r.total_latency.p50}, {"p99", r.total_latency.p99}, {"max", r.total_latency.max}};
  j["budget_ms"] = kTickBudgetMs;
  j["sink_error"] = r.sink_error ? Json(*r.sink_error) : Json(nullptr);
  return j;
}

void SnapshotLogWriter::operator()(const TickSnapshot& snap) {
  out_ << log_record(snap).dump() << '\n';
  if (!out_) throw std::runtime_error("snapshot log write failed");
}

}  // namespace palmpipe::wire
