#include "sacl/protocol.hpp"

#include "sacl/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <map>
#include <sstream>
#include <string>

namespace sacl {

// ---------------------------------------------------------------------------
// Wire format

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'A', 'C', 'L'};

enum class MessageType : std::uint8_t { Landmark = 1, Update = 2 };
enum class ElemType : std::uint8_t { I64 = 1, F64 = 2, U8 = 3, U32 = 4 };

enum Tag : std::uint8_t {
  kTagRobot = 1,
  kTagTime = 2,
  kTagHasReport = 3,
  kTagReportKind = 4,
  kTagReportLandmark = 5,
  kTagReportZ = 6,
  kTagEstimate = 7,
  kTagCov = 8,
  kTagPhi = 9,
  kTagPayloadKind = 10,
  kTagWhitened = 11,
  kTagGamma = 12,
  kTagGammaResidualSum = 13,
  kTagGammaOuterSum = 14,
  kTagMeasurementCount = 15,
};

constexpr std::uint8_t kPayloadSingle = 1;
constexpr std::uint8_t kPayloadSummed = 2;

class Writer {
 public:
  explicit Writer(MessageType type) {
    bytes_.insert(bytes_.end(), kMagic.begin(), kMagic.end());
    put_le(kWireFormatVersion, 2);
    bytes_.push_back(static_cast<std::uint8_t>(type));
  }

  void i64(Tag tag, std::int64_t v) {
    header(tag, ElemType::I64, 1);
    put_le(static_cast<std::uint64_t>(v), 8);
  }
  void u8(Tag tag, std::uint8_t v) {
    header(tag, ElemType::U8, 1);
    bytes_.push_back(v);
  }
  void u32(Tag tag, std::uint32_t v) {
    header(tag, ElemType::U32, 1);
    put_le(v, 4);
  }
  template <typename Derived>
  void f64(Tag tag, const Eigen::MatrixBase<Derived>& m) {
    header(tag, ElemType::F64, static_cast<std::uint16_t>(m.size()));
    // column-major element order
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) put_le(std::bit_cast<std::uint64_t>(m(r, c)), 8);
    }
  }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void header(Tag tag, ElemType type, std::uint16_t count) {
    bytes_.push_back(tag);
    bytes_.push_back(static_cast<std::uint8_t>(type));
    put_le(count, 2);
  }
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, MessageType expected) {
    if (bytes.size() < 7 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
      throw ProtocolError("message: bad magic");
    }
    const auto version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != kWireFormatVersion) {
      throw ProtocolError("message: unsupported format version " + std::to_string(version));
    }
    if (bytes[6] != static_cast<std::uint8_t>(expected)) {
      throw ProtocolError("message: unexpected message type");
    }
    std::size_t pos = 7;
    while (pos < bytes.size()) {
      if (bytes.size() - pos < 4) throw ProtocolError("message: truncated field header");
      Field f;
      const std::uint8_t tag = bytes[pos];
      f.type = static_cast<ElemType>(bytes[pos + 1]);
      f.count = static_cast<std::uint16_t>(bytes[pos + 2] | (bytes[pos + 3] << 8));
      pos += 4;
      const std::size_t len = static_cast<std::size_t>(f.count) * width(f.type);
      if (len == 0 || bytes.size() - pos < len) throw ProtocolError("message: truncated field");
      f.data = bytes.subspan(pos, len);
      pos += len;
      if (!fields_.emplace(tag, f).second) throw ProtocolError("message: duplicate field");
    }
  }

  std::int64_t i64(Tag tag) const {
    return static_cast<std::int64_t>(get_le(field(tag, ElemType::I64, 1).data, 0, 8));
  }
  std::uint8_t u8(Tag tag) const { return field(tag, ElemType::U8, 1).data[0]; }
  std::uint32_t u32(Tag tag) const {
    return static_cast<std::uint32_t>(get_le(field(tag, ElemType::U32, 1).data, 0, 4));
  }
  template <int Rows, int Cols>
  Eigen::Matrix<double, Rows, Cols> f64(Tag tag) const {
    const Field& f = field(tag, ElemType::F64, Rows * Cols);
    Eigen::Matrix<double, Rows, Cols> m;
    std::size_t k = 0;
    for (int c = 0; c < Cols; ++c) {
      for (int r = 0; r < Rows; ++r, ++k) {
        m(r, c) = std::bit_cast<double>(get_le(f.data, 8 * k, 8));
      }
    }
    if (!m.allFinite()) throw ProtocolError("message: non-finite value in field " +
                                            std::to_string(tag));
    return m;
  }

 private:
  struct Field {
    ElemType type = ElemType::U8;
    std::uint16_t count = 0;
    std::span<const std::uint8_t> data;
  };

  static std::size_t width(ElemType t) {
    switch (t) {
      case ElemType::I64:
      case ElemType::F64:
        return 8;
      case ElemType::U32:
        return 4;
      case ElemType::U8:
        return 1;
    }
    throw ProtocolError("message: unknown element type");
  }

  static std::uint64_t get_le(std::span<const std::uint8_t> d, std::size_t off, int w) {
    std::uint64_t v = 0;
    for (int i = 0; i < w; ++i) v |= static_cast<std::uint64_t>(d[off + i]) << (8 * i);
    return v;
  }

  const Field& field(Tag tag, ElemType type, int count) const {
    const auto it = fields_.find(tag);
    if (it == fields_.end()) throw ProtocolError("message: missing field " + std::to_string(tag));
    if (it->second.type != type || it->second.count != count) {
      throw ProtocolError("message: field " + std::to_string(tag) + " has wrong shape");
    }
    return it->second;
  }

  std::map<std::uint8_t, Field> fields_;
};

Pose pose_from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

std::vector<std::uint8_t> encode(const LandmarkMessage& m) {
  Writer w(MessageType::Landmark);
  w.i64(kTagRobot, m.sender.label());
  w.i64(kTagTime, m.time);
  // Report fields are always written so the layout is fixed.
  const MeasurementReport report = m.report.value_or(MeasurementReport{});
  w.u8(kTagHasReport, m.report ? 1 : 0);
  w.u8(kTagReportKind, static_cast<std::uint8_t>(report.kind));
  w.i64(kTagReportLandmark, report.landmark.label());
  w.f64(kTagReportZ, report.z);
  w.f64(kTagEstimate, m.estimate.vector());
  w.f64(kTagCov, m.cov);
  w.f64(kTagPhi, m.phi);
  return w.take();
}

std::vector<std::uint8_t> encode(const UpdateMessage& m) {
  Writer w(MessageType::Update);
  w.i64(kTagRobot, m.recipient.label());
  w.i64(kTagTime, m.time);
  if (const auto* single = std::get_if<SingleUpdatePayload>(&m.payload)) {
    w.u8(kTagPayloadKind, kPayloadSingle);
    w.f64(kTagWhitened, single->whitened_residual);
    w.f64(kTagGamma, single->gamma);
  } else {
    const auto& summed = std::get<SummedUpdatePayload>(m.payload);
    w.u8(kTagPayloadKind, kPayloadSummed);
    w.f64(kTagGammaResidualSum, summed.gamma_residual_sum);
    w.f64(kTagGammaOuterSum, summed.gamma_outer_sum);
    w.u32(kTagMeasurementCount, summed.n_measurements);
  }
  return w.take();
}

LandmarkMessage decode_landmark_message(std::span<const std::uint8_t> bytes) {
  const Reader r(bytes, MessageType::Landmark);
  LandmarkMessage m;
  m.sender = RobotId(static_cast<int>(r.i64(kTagRobot)));
  m.time = r.i64(kTagTime);
  if (r.u8(kTagHasReport) != 0) {
    MeasurementReport report;
    const std::uint8_t kind = r.u8(kTagReportKind);
    if (kind != static_cast<std::uint8_t>(MeasurementKind::Relative) &&
        kind != static_cast<std::uint8_t>(MeasurementKind::Absolute)) {
      throw ProtocolError("landmark message: unknown measurement kind");
    }
    report.kind = static_cast<MeasurementKind>(kind);
    report.landmark = RobotId(static_cast<int>(r.i64(kTagReportLandmark)));
    report.z = r.f64<2, 1>(kTagReportZ);
    m.report = report;
  }
  m.estimate = pose_from(r.f64<3, 1>(kTagEstimate));
  m.cov = r.f64<3, 3>(kTagCov);
  m.phi = r.f64<3, 3>(kTagPhi);
  return m;
}

UpdateMessage decode_update_message(std::span<const std::uint8_t> bytes) {
  const Reader r(bytes, MessageType::Update);
  UpdateMessage m;
  m.recipient = RobotId(static_cast<int>(r.i64(kTagRobot)));
  m.time = r.i64(kTagTime);
  switch (r.u8(kTagPayloadKind)) {
    case kPayloadSingle:
      m.payload = SingleUpdatePayload{r.f64<2, 1>(kTagWhitened), r.f64<3, 2>(kTagGamma)};
      break;
    case kPayloadSummed:
      m.payload = SummedUpdatePayload{r.f64<3, 1>(kTagGammaResidualSum),
                                      r.f64<3, 3>(kTagGammaOuterSum),
                                      r.u32(kTagMeasurementCount)};
      break;
    default:
      throw ProtocolError("update message: unknown payload kind");
  }
  return m;
}

const char* reason_code_name(ReasonCode code) {
  switch (code) {
    case ReasonCode::PairUnreachable:
      return "PAIR_UNREACHABLE";
    case ReasonCode::Stale:
      return "STALE";
    case ReasonCode::NumericS:
      return "NUMERIC_S";
  }
  return "UNKNOWN";
}

std::string format_event(const ProtocolEvent& e) {
  std::ostringstream os;
  os << e.time << ' ' << reason_code_name(e.code);
  if (!e.detail.empty()) os << ' ' << e.detail;
  return os.str();
}

// ---------------------------------------------------------------------------
// Robot

RobotNode RobotNode::initial(RobotId id, const Pose& estimate, const Mat3& cov) {
  return {SplitRobotState::initial(id, estimate, cov), 0, -1};
}

RobotNode robot_step(const RobotNode& n, const ControlInput& u, const MotionNoise& q,
                     double dt) {
  RobotNode out = n;
  out.split = split_propagate(n.split, u, q, dt);
  out.time = n.time + 1;
  return out;
}

LandmarkMessage robot_emit_landmark_message(const RobotNode& n,
                                            std::optional<MeasurementReport> report) {
  return {n.split.id, report, n.split.estimate, n.split.cov, n.split.phi, n.time};
}

ApplyResult robot_apply_update(const RobotNode& n, const UpdateMessage& m) {
  if (m.recipient != n.split.id) {
    throw ProtocolError("update message for robot " + std::to_string(m.recipient.label()) +
                        " delivered to robot " + std::to_string(n.split.id.label()));
  }
  if (m.time != n.time) return {n, ApplyOutcome::Stale};

  RobotNode out = n;
  if (const auto* single = std::get_if<SingleUpdatePayload>(&m.payload)) {
    if (!single->gamma.allFinite() || !single->whitened_residual.allFinite()) {
      throw ProtocolError("update message: non-finite payload");
    }
    out.split = split_update_robot(n.split, single->gamma, single->whitened_residual);
  } else {
    const auto& summed = std::get<SummedUpdatePayload>(m.payload);
    if (!summed.gamma_residual_sum.allFinite() || !summed.gamma_outer_sum.allFinite()) {
      throw ProtocolError("update message: non-finite payload");
    }
    out.split = split_apply_correction(n.split, summed.gamma_residual_sum,
                                       summed.gamma_outer_sum);
  }
  out.last_update_time = n.time;
  return {out, ApplyOutcome::Applied};
}

// ---------------------------------------------------------------------------
// Server

bool MeasurementOrder::operator()(const Measurement& lhs, const Measurement& rhs) const {
  const auto key = [](const Measurement& m) {
    const auto landmark = landmark_of(m);
    return std::pair{observer_of(m).label(), landmark ? landmark->label() : 0};
  };
  return key(lhs) < key(rhs);
}

void sort_by_update_order(std::vector<Measurement>& measurements) {
  std::stable_sort(measurements.begin(), measurements.end(), MeasurementOrder{});
}

Server::Server(ServerConfig config) : config_(config), pi_(config.team_size) {}

namespace {

std::string describe(const Measurement& m) {
  std::string s = "observer=" + std::to_string(observer_of(m).label());
  if (const auto l = landmark_of(m)) {
    s += " landmark=" + std::to_string(l->label());
  } else {
    s += " absolute";
  }
  return s;
}

SplitRobotState snapshot_of(const LandmarkMessage& msg) {
  return {msg.sender, msg.estimate, msg.cov, msg.phi};
}

bool same_snapshot(const SplitRobotState& a, const SplitRobotState& b) {
  return a.estimate == b.estimate && a.cov == b.cov && a.phi == b.phi;
}

}  // namespace

EpochResult Server::handle_measurement_epoch(std::span<const LandmarkMessage> msgs,
                                             const RobotSet& missed) {
  EpochResult result;
  if (msgs.empty()) return result;

  const std::size_t n = config_.team_size;
  const Timestep time = msgs.front().time;
  std::map<RobotId, SplitRobotState> shadow;
  std::vector<Measurement> readings;
  for (const LandmarkMessage& msg : msgs) {
    if (!msg.sender.valid_for(n)) {
      throw ProtocolError("landmark message from unknown robot " +
                          std::to_string(msg.sender.label()));
    }
    if (msg.time != time) throw ProtocolError("landmark messages span several timesteps");
    const SplitRobotState snap = snapshot_of(msg);
    const auto [it, inserted] = shadow.emplace(msg.sender, snap);
    if (!inserted && !same_snapshot(it->second, snap)) {
      throw ProtocolError("conflicting landmark messages from robot " +
                          std::to_string(msg.sender.label()));
    }
    if (!msg.report) continue;
    if (msg.report->kind == MeasurementKind::Relative) {
      if (!msg.report->landmark.valid_for(n) || msg.report->landmark == msg.sender) {
        throw ProtocolError("relative reading with invalid landmark robot");
      }
      readings.emplace_back(RelativeMeasurement{msg.sender, msg.report->landmark, msg.report->z, time});
    } else {
      readings.emplace_back(AbsoluteMeasurement{msg.sender, msg.report->z, time});
    }
  }
  sort_by_update_order(readings);

  const auto log = [&](ReasonCode code, std::string detail) {
    result.events.push_back({time, code, std::move(detail)});
  };

  std::vector<Vec3> sum_gr(n, Vec3::Zero());
  std::vector<Mat3> sum_gg(n, Mat3::Zero());
  GammaSet last;
  for (const Measurement& m : readings) {
    const RobotId a = observer_of(m);
    const auto b = landmark_of(m);
    const auto reachable = [&](RobotId id) {
      return shadow.contains(id) && !missed.contains(id);
    };
    if (!reachable(a) || (b && !reachable(*b))) {
      log(ReasonCode::PairUnreachable, describe(m));
      continue;
    }

    GammaSet g;
    try {
      if (b) {
        const auto& rel = std::get<RelativeMeasurement>(m);
        const Innovation inn = compute_innovation(shadow.at(a), shadow.at(*b),
                                                  pi_.entries.get(a, *b), rel.z, config_.noise);
        g = compute_gammas(pi_, shadow.at(a), shadow.at(*b), inn);
      } else {
        const auto& absm = std::get<AbsoluteMeasurement>(m);
        const Innovation inn = compute_absolute_innovation(shadow.at(a), absm.z, config_.noise);
        g = compute_absolute_gammas(pi_, shadow.at(a), inn);
      }
    } catch (const NumericalError& e) {
      log(ReasonCode::NumericS, describe(m) + " " + e.what());
      continue;
    }

    // Later readings in the epoch must see the updated beliefs of the robots involved.
    for (auto& [id, state] : shadow) {
      if (missed.contains(id)) continue;
      state = split_update_robot(state, g.gammas[id.index()], g.whitened_residual);
    }
    pi_ = pi_update(pi_, g, missed, config_.pi_sign);
    for (std::size_t i = 0; i < n; ++i) {
      sum_gr[i] += g.gammas[i] * g.whitened_residual;
      sum_gg[i] += g.gammas[i] * g.gammas[i].transpose();
    }
    last = std::move(g);
    ++result.processed;
  }

  pi_.time = time;
  if (result.processed > 0) {
    result.updates.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      UpdateMessage u;
      u.recipient = RobotId::from_index(i);
      u.time = time;
      if (result.processed == 1) {
        u.payload = SingleUpdatePayload{last.whitened_residual, last.gammas[i]};
      } else {
        u.payload = SummedUpdatePayload{sum_gr[i], sum_gg[i],
                                        static_cast<std::uint32_t>(result.processed)};
      }
      result.updates.push_back(std::move(u));
    }
  }
  events_.insert(events_.end(), result.events.begin(), result.events.end());
  return result;
}

EpochResult Server::handle_absolute(const LandmarkMessage& msg, const RobotSet& missed) {
  if (!msg.report || msg.report->kind != MeasurementKind::Absolute) {
    throw ProtocolError("handle_absolute: message carries no absolute reading");
  }
  return handle_measurement_epoch(std::span(&msg, 1), missed);
}

}  // namespace sacl
