#include "mstyle/runtime/protocol.hpp"

#include "mstyle/container.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace mstyle::runtime {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& message) { throw ProtocolError("invalid_message", message); }

double finite_number(const json& j, const char* field) {
  if (!j.contains(field)) {
    invalid(std::string("missing field '") + field + "'");
  }
  const json& v = j.at(field);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    invalid(std::string("field '") + field + "' must be a finite number");
  }
  return v.get<double>();
}

ControlMessage parse_control(const json& j) {
  if (!j.contains("dir") || !j["dir"].is_array() || j["dir"].size() != 2 || !j["dir"][0].is_number() ||
      !j["dir"][1].is_number()) {
    invalid("field 'dir' must be [x, z]");
  }
  ControlMessage m;
  m.control.direction = {j["dir"][0].get<double>(), j["dir"][1].get<double>()};
  m.control.speed = finite_number(j, "speed");
  if (!j.contains("gait") || !j["gait"].is_string()) {
    invalid("field 'gait' must be one of stand, walk, run");
  }
  const auto gait = motion::parse_gait(j["gait"].get<std::string>());
  if (!gait) {
    invalid("unknown gait '" + j["gait"].get<std::string>() + "'; expected stand, walk or run");
  }
  m.control.gait = *gait;
  try {
    m.control.validate();
  } catch (const ConfigError& e) {
    invalid(e.what());
  }
  return m;
}

SetStyleMessage parse_set_style(const json& j, std::size_t styles) {
  if (!j.contains("weights") || !j["weights"].is_array()) {
    invalid("field 'weights' must be an array of numbers");
  }
  SetStyleMessage m;
  for (const auto& w : j["weights"]) {
    if (!w.is_number()) {
      invalid("field 'weights' must be an array of numbers");
    }
    m.weights.push_back(w.get<float>());
  }
  if (j.contains("duration_s")) {
    m.duration_s = finite_number(j, "duration_s");
  }
  if (m.duration_s < 0.0) {
    invalid("field 'duration_s' must be non-negative");
  }
  try {
    validate_style_weights(m.weights, styles);
  } catch (const ConfigError& e) {
    invalid(e.what());
  }
  return m;
}

ResetMessage parse_reset(const json& j) {
  ResetMessage m;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
      invalid("field 'seed' must be a non-negative integer");
    }
    m.seed = j["seed"].get<std::uint64_t>();
  }
  return m;
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
json quat(const Eigen::Quaterniond& q) { return json::array({q.x(), q.y(), q.z(), q.w()}); }

void check_finite(const json& j) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) {
    throw NumericError("frame message contains a non-finite value");
  }
  if (j.is_structured()) {
    for (const auto& v : j) {
      check_finite(v);
    }
  }
}

}  // namespace

ClientMessage parse_client_message(std::string_view text, std::size_t styles) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw ProtocolError("malformed_json", "message is not valid JSON");
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ProtocolError("malformed_json", "message must be an object with a string 'type'");
  }
  const std::string type = j["type"].get<std::string>();
  if (type == "control") {
    return parse_control(j);
  }
  if (type == "set_style") {
    return parse_set_style(j, styles);
  }
  if (type == "reset") {
    return parse_reset(j);
  }
  throw ProtocolError("unknown_type", "unknown message type '" + type + "'");
}

json to_json(const ClientMessage& message) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ControlMessage>) {
          return {{"type", "control"},
                  {"dir", {m.control.direction.x(), m.control.direction.y()}},
                  {"speed", m.control.speed},
                  {"gait", std::string(motion::gait_name(m.control.gait))}};
        } else if constexpr (std::is_same_v<T, SetStyleMessage>) {
          return {{"type", "set_style"}, {"weights", m.weights}, {"duration_s", m.duration_s}};
        } else {
          return {{"type", "reset"}, {"seed", m.seed}};
        }
      },
      message);
}

json hello_message(const models::MotionModel& model, double fps) {
  json joints = json::array();
  for (const auto& joint : model.skeleton().joints()) {
    joints.push_back({{"name", joint.name}, {"parent", joint.parent}, {"offset", vec3(joint.offset)}});
  }
  return {{"type", "hello"}, {"fps", fps}, {"styles", model.styles()}, {"skeleton", {{"joints", joints}}}};
}

json frame_message(const Frame& frame, std::uint64_t overrun_count) {
  json pos = json::array();
  json rot = json::array();
  for (std::size_t j = 0; j < frame.positions.size(); ++j) {
    pos.push_back(vec3(frame.positions[j]));
    rot.push_back(quat(frame.rotations[j]));
  }
  json msg = {{"type", "frame"},
              {"t", frame.t},
              {"root",
               {{"pos", json::array({frame.root.position.x(), 0.0, frame.root.position.y()})},
                {"quat", quat(frame.root.rotation())}}},
              {"joints", {{"pos", pos}, {"quat", rot}}},
              {"experts", frame.experts},
              {"lambda", frame.lambda},
              {"phase", frame.phase},
              {"style", frame.style},
              {"faulted", frame.faulted},
              {"overrun_count", overrun_count}};
  check_finite(msg);
  return msg;
}

json error_message(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

void ControlMailbox::post(ClientMessage message) {
  std::visit(
      [this](auto&& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ControlMessage>) {
          control_.put(std::move(m));
        } else if constexpr (std::is_same_v<T, SetStyleMessage>) {
          style_.put(std::move(m));
        } else {
          reset_.put(std::move(m));
        }
      },
      std::move(message));
}

PendingInput ControlMailbox::take() { return {reset_.take(), style_.take(), control_.take()}; }

DropOldestQueue::DropOldestQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw ConfigError("queue capacity must be positive");
  }
}

void DropOldestQueue::push(std::string message, bool droppable) {
  items_.push_back({std::move(message), droppable});
  if (!droppable) {
    return;
  }
  ++droppable_count_;
  if (droppable_count_ > capacity_) {
    for (auto it = items_.begin(); it != items_.end(); ++it) {
      if (it->droppable) {
        items_.erase(it);
        --droppable_count_;
        ++dropped_;
        break;
      }
    }
  }
}

std::optional<std::string> DropOldestQueue::pop() {
  if (items_.empty()) {
    return std::nullopt;
  }
  Item item = std::move(items_.front());
  items_.pop_front();
  if (item.droppable) {
    --droppable_count_;
  }
  return std::move(item.text);
}

ServerSession::ServerSession(models::MotionModel& model, SessionConfig config, std::uint64_t seed)
    : model_(model), session_(model, config), seed_(seed) {
  session_.reset(seed);
}

json ServerSession::hello() const { return hello_message(model_, session_.config().fps); }

std::vector<json> ServerSession::tick(const PendingInput& input, std::uint64_t overrun_count) {
  if (recording_ && !input.empty()) {
    json inputs = json::array();
    if (input.reset) {
      inputs.push_back(to_json(*input.reset));
    }
    if (input.style) {
      inputs.push_back(to_json(*input.style));
    }
    if (input.control) {
      inputs.push_back(to_json(*input.control));
    }
    *recording_ << json{{"t", ticks_}, {"inputs", inputs}}.dump() << '\n';
  }
  if (input.reset) {
    session_.reset(input.reset->seed);
  }
  if (input.style) {
    session_.set_style(input.style->weights, input.style->duration_s);
  }
  if (input.control) {
    session_.set_control(input.control->control);
  }
  const Frame frame = session_.tick();
  ++ticks_;
  std::vector<json> out;
  if (frame.fault) {
    out.push_back(error_message("model_fault", *frame.fault));
  }
  out.push_back(frame_message(frame, overrun_count));
  return out;
}

void ServerSession::record_to(std::ostream& out) {
  recording_ = &out;
  out << json{{"type", "recording"},
              {"version", 1},
              {"fps", session_.config().fps},
              {"trajectory_blend", session_.config().trajectory_blend},
              {"seed", seed_},
              {"styles", model_.styles()}}
             .dump()
      << '\n';
}

void ServerSession::finish_recording() {
  if (recording_) {
    *recording_ << json{{"type", "end"}, {"ticks", ticks_}}.dump() << '\n';
    recording_->flush();
    recording_ = nullptr;
  }
}

Recording read_recording(std::istream& in) {
  Recording rec;
  std::string line;
  std::size_t number = 0;
  bool header = false;
  bool ended = false;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) {
      continue;
    }
    if (ended) {
      throw ParseError(number, "content after the end line");
    }
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError(number, "not a JSON object");
    }
    try {
      if (!header) {
        if (j.value("type", "") != "recording" || j.value("version", 0) != 1) {
          throw ParseError(number, "expected a version 1 recording header");
        }
        rec.fps = j.at("fps").get<double>();
        rec.trajectory_blend = j.at("trajectory_blend").get<double>();
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.styles = j.at("styles").get<std::vector<std::string>>();
        header = true;
        continue;
      }
      if (j.value("type", "") == "end") {
        rec.ticks = j.at("ticks").get<std::uint64_t>();
        ended = true;
        continue;
      }
      const auto t = j.at("t").get<std::uint64_t>();
      PendingInput& pending = rec.inputs[t];
      for (const auto& msg : j.at("inputs")) {
        std::visit(
            [&pending](auto&& m) {
              using T = std::decay_t<decltype(m)>;
              if constexpr (std::is_same_v<T, ControlMessage>) {
                pending.control = m;
              } else if constexpr (std::is_same_v<T, SetStyleMessage>) {
                pending.style = m;
              } else {
                pending.reset = m;
              }
            },
            parse_client_message(msg.dump(), rec.styles.size()));
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(number, e.what());
    }
  }
  if (!header) {
    throw ParseError("recording is empty");
  }
  if (!ended) {
    throw ParseError(number, "recording has no end line");
  }
  if (!rec.inputs.empty() && rec.inputs.rbegin()->first >= rec.ticks) {
    throw ParseError(number, "input recorded after the last tick");
  }
  return rec;
}

Recording load_recording(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open recording " + path.string());
  }
  return read_recording(in);
}

std::vector<std::string> replay_recording(models::MotionModel& model, const Recording& recording) {
  if (recording.styles != model.styles()) {
    throw ConfigError("recording style vocabulary does not match the model");
  }
  ServerSession server(model, {recording.fps, recording.trajectory_blend}, recording.seed);
  std::vector<std::string> out;
  for (std::uint64_t t = 0; t < recording.ticks; ++t) {
    const auto it = recording.inputs.find(t);
    for (const auto& msg : server.tick(it == recording.inputs.end() ? PendingInput{} : it->second)) {
      out.push_back(msg.dump());
    }
  }
  return out;
}

std::uint64_t stream_hash(const std::vector<std::string>& messages) {
  std::uint64_t h = fnv1a64("");
  for (const auto& m : messages) {
    h = fnv1a64(m, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

}  // namespace mstyle::runtime
