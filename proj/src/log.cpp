#include "hetdr/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include "hetdr/error.hpp"

namespace hetdr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::NonConstantCharacteristic: return "NonConstantCharacteristic";
    case ErrorCode::MissingObservation: return "MissingObservation";
    case ErrorCode::UnitTooShort: return "UnitTooShort";
    case ErrorCode::EmptyPanel: return "EmptyPanel";
    case ErrorCode::NotIdentified: return "NotIdentified";
    case ErrorCode::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ReducibleChain: return "ReducibleChain";
    case ErrorCode::NoStatesBelow: return "NoStatesBelow";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::AllLevelsDropped: return "AllLevelsDropped";
  }
  return "Unknown";
}

namespace log {
namespace {

std::mutex g_mutex;
std::atomic<int> g_level{static_cast<int>(Level::Warning)};
std::atomic<std::size_t> g_warnings{0};
Sink g_sink;

const char* label(Level l) {
  switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warning: return "warning";
    case Level::Error: return "error";
    default: return "";
  }
}

}  // namespace

void set_level(Level level) { g_level = static_cast<int>(level); }
Level level() { return static_cast<Level>(g_level.load()); }

void set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void reset_sink() {
  std::lock_guard lock(g_mutex);
  g_sink = nullptr;
}

void write(Level l, const std::string& message) {
  if (l >= Level::Warning) ++g_warnings;
  if (static_cast<int>(l) < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(l, message);
  } else {
    std::cerr << "[hetdr " << label(l) << "] " << message << '\n';
  }
}

std::size_t warning_count() { return g_warnings.load(); }
void reset_counters() { g_warnings = 0; }

}  // namespace log
}  // namespace hetdr
