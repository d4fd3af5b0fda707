#ifndef CEMB_LOG_HPP
#define CEMB_LOG_HPP

#include <functional>
#include <iostream>
#include <string>

namespace cemb {

using LogSink = std::function<void(const std::string&)>;

/// Process-wide warning sink; defaults to stderr. Tests swap it to capture.
inline LogSink& warning_sink() {
  static LogSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) { warning_sink()(msg); }

inline LogSink& info_sink() {
  static LogSink sink = [](const std::string& msg) { std::cerr << msg << '\n'; };
  return sink;
}

inline void info(const std::string& msg) { info_sink()(msg); }

/// Restores the previous warning sink on scope exit.
class ScopedWarningCapture {
 public:
  explicit ScopedWarningCapture(LogSink sink) : saved_(warning_sink()) { warning_sink() = std::move(sink); }
  ~ScopedWarningCapture() { warning_sink() = saved_; }
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

 private:
  LogSink saved_;
};

}  // namespace cemb

#endif  // CEMB_LOG_HPP
