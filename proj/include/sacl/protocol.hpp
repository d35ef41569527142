#pragma once

#include "sacl/split_ekf.hpp"
#include "sacl/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace sacl {

enum class MeasurementKind : std::uint8_t { Relative = 1, Absolute = 2 };

/// Exteroceptive reading attached to the observer's landmark message.
struct MeasurementReport {
  MeasurementKind kind = MeasurementKind::Relative;
  RobotId landmark;  // unused for absolute readings
  Vec2 z = Vec2::Zero();
};

/// Robot -> server. Carries the sender's propagated estimate, covariance and
/// Phi; the observer's message additionally carries the reading.
struct LandmarkMessage {
  RobotId sender;
  std::optional<MeasurementReport> report;
  Pose estimate;
  Mat3 cov = Mat3::Zero();
  Mat3 phi = Mat3::Identity();
  Timestep time = 0;
};

/// Single-measurement update: (r_bar, Gamma_i).
struct SingleUpdatePayload {
  Vec2 whitened_residual = Vec2::Zero();
  Mat32 gamma = Mat32::Zero();
};

/// Sequentially accumulated update: (sum Gamma_i r_bar, sum Gamma_i Gamma_i^T).
struct SummedUpdatePayload {
  Vec3 gamma_residual_sum = Vec3::Zero();
  Mat3 gamma_outer_sum = Mat3::Zero();
  std::uint32_t n_measurements = 0;
};

/// Server -> robot.
struct UpdateMessage {
  RobotId recipient;
  Timestep time = 0;
  std::variant<SingleUpdatePayload, SummedUpdatePayload> payload;
};

// Wire format: "SACL" magic, u16 format version, u8 message type, then a
// sequence of tagged fields (u8 tag, u8 element type, u16 element count,
// little-endian payload). Field layout does not depend on team size.
inline constexpr std::uint16_t kWireFormatVersion = 1;

std::vector<std::uint8_t> encode(const LandmarkMessage& m);
std::vector<std::uint8_t> encode(const UpdateMessage& m);
LandmarkMessage decode_landmark_message(std::span<const std::uint8_t> bytes);
UpdateMessage decode_update_message(std::span<const std::uint8_t> bytes);

enum class ReasonCode { PairUnreachable, Stale, NumericS };

const char* reason_code_name(ReasonCode code);

struct ProtocolEvent {
  Timestep time = 0;
  ReasonCode code = ReasonCode::PairUnreachable;
  std::string detail;
};

/// One event-log line: "<time> <CODE> <detail>".
std::string format_event(const ProtocolEvent& e);

// ---------------------------------------------------------------------------
// Robot side

struct RobotNode {
  SplitRobotState split;
  Timestep time = 0;
  Timestep last_update_time = -1;

  static RobotNode initial(RobotId id, const Pose& estimate, const Mat3& cov);
};

RobotNode robot_step(const RobotNode& n, const ControlInput& u, const MotionNoise& q, double dt);

LandmarkMessage robot_emit_landmark_message(const RobotNode& n,
                                            std::optional<MeasurementReport> report);

enum class ApplyOutcome { Applied, Stale };

struct ApplyResult {
  RobotNode node;
  ApplyOutcome outcome = ApplyOutcome::Applied;
};

/// Stale messages (time != node time) are discarded and reported, not thrown.
ApplyResult robot_apply_update(const RobotNode& n, const UpdateMessage& m);

// ---------------------------------------------------------------------------
// Server side

/// Sequential-updating order: ascending (observer, landmark); an absolute
/// reading sorts before the observer's relative readings.
struct MeasurementOrder {
  bool operator()(const Measurement& lhs, const Measurement& rhs) const;
};

void sort_by_update_order(std::vector<Measurement>& measurements);

struct EpochResult {
  std::vector<UpdateMessage> updates;  // one per robot, robot order
  std::size_t processed = 0;
  std::vector<ProtocolEvent> events;
};

struct ServerConfig {
  std::size_t team_size = 0;
  MeasurementNoise noise;
  PiUpdateSign pi_sign = PiUpdateSign::Subtract;
};

/// Holds Pi and runs the per-epoch update procedure. One measurement yields
/// single payloads; several are processed one by one against shadow copies of
/// the involved robots' beliefs and yield summed payloads.
class Server {
 public:
  explicit Server(ServerConfig config);

  const PiStore& pi() const { return pi_; }
  const ServerConfig& config() const { return config_; }
  const std::vector<ProtocolEvent>& events() const { return events_; }

  /// `missed` is the delivery report's missed set for this epoch. Readings
  /// whose pair is incomplete or touches a missed robot are discarded.
  EpochResult handle_measurement_epoch(std::span<const LandmarkMessage> msgs,
                                       const RobotSet& missed);

  EpochResult handle_absolute(const LandmarkMessage& msg, const RobotSet& missed);

 private:
  ServerConfig config_;
  PiStore pi_;
  std::vector<ProtocolEvent> events_;
};

}  // namespace sacl
