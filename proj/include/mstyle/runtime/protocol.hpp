#pragma once

#include "mstyle/runtime/session.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mstyle::runtime {

// ---- client messages -------------------------------------------------------

struct ControlMessage {
  ControlState control;
};

struct SetStyleMessage {
  std::vector<float> weights;
  double duration_s = 1.0;
};

struct ResetMessage {
  std::uint64_t seed = 0;
};

using ClientMessage = std::variant<ControlMessage, SetStyleMessage, ResetMessage>;

/// Rejected client message; `code` goes into the error reply.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Parses and validates one client message against a vocabulary of `styles` entries.
/// Codes: malformed_json, unknown_type, invalid_message.
ClientMessage parse_client_message(std::string_view text, std::size_t styles);

nlohmann::json to_json(const ClientMessage& message);

// ---- server messages -------------------------------------------------------

nlohmann::json hello_message(const models::MotionModel& model, double fps);
/// Root quaternions are [x, y, z, w]; root position is [x, 0, z].
nlohmann::json frame_message(const Frame& frame, std::uint64_t overrun_count);
nlohmann::json error_message(const std::string& code, const std::string& message);

// ---- mailbox ---------------------------------------------------------------

/// Single-value slot: writers replace, the reader takes. Lock-free exchange.
template <typename T>
class LatestSlot {
 public:
  LatestSlot() = default;
  LatestSlot(const LatestSlot&) = delete;
  LatestSlot& operator=(const LatestSlot&) = delete;
  ~LatestSlot() { delete value_.exchange(nullptr); }

  void put(T value) { delete value_.exchange(new T(std::move(value)), std::memory_order_acq_rel); }

  std::optional<T> take() {
    std::unique_ptr<T> v(value_.exchange(nullptr, std::memory_order_acq_rel));
    if (!v) {
      return std::nullopt;
    }
    return std::move(*v);
  }

 private:
  std::atomic<T*> value_{nullptr};
};

/// Inputs applied before one tick, in the order reset, style, control.
struct PendingInput {
  std::optional<ResetMessage> reset;
  std::optional<SetStyleMessage> style;
  std::optional<ControlMessage> control;

  bool empty() const { return !reset && !style && !control; }
};

/// Latest-wins coalescing of client messages between ticks.
class ControlMailbox {
 public:
  void post(ClientMessage message);
  PendingInput take();

 private:
  LatestSlot<ResetMessage> reset_;
  LatestSlot<SetStyleMessage> style_;
  LatestSlot<ControlMessage> control_;
};

/// Outgoing message queue for one client. When more than `capacity` droppable
/// messages wait, the oldest droppable one is discarded.
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity);

  void push(std::string message, bool droppable = true);
  std::optional<std::string> pop();
  std::size_t size() const { return items_.size(); }
  std::size_t dropped() const { return dropped_; }

 private:
  struct Item {
    std::string text;
    bool droppable;
  };
  std::size_t capacity_;
  std::size_t droppable_count_ = 0;
  std::size_t dropped_ = 0;
  std::deque<Item> items_;
};

// ---- session driving, recording, replay ------------------------------------

/// Session plus the inputs applied per tick, optionally recorded as JSON lines.
class ServerSession {
 public:
  ServerSession(models::MotionModel& model, SessionConfig config, std::uint64_t seed);

  nlohmann::json hello() const;
  /// Applies `input` then advances one frame. Returns the frame message,
  /// preceded by an error message on the first faulted frame.
  std::vector<nlohmann::json> tick(const PendingInput& input, std::uint64_t overrun_count = 0);

  /// Starts writing a recording to `out` (header now, one line per applied input).
  void record_to(std::ostream& out);
  /// Writes the closing line of the recording, if any.
  void finish_recording();

  Session& session() { return session_; }
  std::uint64_t ticks() const { return ticks_; }

 private:
  models::MotionModel& model_;
  Session session_;
  std::uint64_t seed_;
  std::uint64_t ticks_ = 0;
  std::ostream* recording_ = nullptr;
};

struct Recording {
  double fps = 60.0;
  double trajectory_blend = 0.5;
  std::uint64_t seed = 0;
  std::vector<std::string> styles;
  std::uint64_t ticks = 0;
  std::map<std::uint64_t, PendingInput> inputs;  // by tick index
};

/// Throws ParseError naming the line on malformed content.
Recording read_recording(std::istream& in);
Recording load_recording(const std::filesystem::path& path);

/// Re-runs a recording against `model`; returns the serialized frame messages.
std::vector<std::string> replay_recording(models::MotionModel& model, const Recording& recording);

/// FNV-1a over the serialized messages, newline separated.
std::uint64_t stream_hash(const std::vector<std::string>& messages);

}  // namespace mstyle::runtime
