/**
 * @file wire.hpp
 * @brief Text records exchanged with the outside world.
 *
 * PoseCommand (client -> server):
 *   {"type":"set_pose","angle_deg":45,"position":"right","grip_step":30,"mode":"masked"}
 *
 * TickMessage (server -> client), fields in this order:
 *   type ("tick"), tick, merged (10x10 N), downsized (3x3), prediction
 *   ({angle_deg, position, pattern_id} or null), mask (3x3 bool or null),
 *   stimulus (3x3), contacts (3 x {x_mm, y_mm, tau_a, tau_e, active}),
 *   latency_ms
 *
 * Snapshot log records are one JSON object per line: the TickMessage fields
 * followed by mode, timestamp and a per-stage `stages_ms` object.
 */

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"

#include "palmpipe/pipeline.hpp"

namespace palmpipe::wire {

using Json = nlohmann::ordered_json;

struct PoseCommand {
  AngleClass angle = AngleClass::Deg0;
  PositionClass position = PositionClass::Center;
  int grip_step = 0;
  PipelineMode mode = PipelineMode::direct();
  bool operator==(const PoseCommand&) const = default;
};

struct ParseError {
  std::string message;
};

/// Strict parse: every field required, enumerations exact.
std::variant<PoseCommand, ParseError> parse_pose_command(std::string_view text);
std::string to_json(const PoseCommand& cmd);

Json tick_message(const TickSnapshot& snap);
Json log_record(const TickSnapshot& snap);
Json error_message(std::string_view message);
Json run_report_json(const RunReport& report);

/// Appends one log line per snapshot.
class SnapshotLogWriter {
 public:
  explicit SnapshotLogWriter(std::ostream& out) : out_(out) {}
  void operator()(const TickSnapshot& snap);

 private:
  std::ostream& out_;
};

}  // namespace palmpipe::wire
