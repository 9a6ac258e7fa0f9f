#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <sys/types.h>

namespace mlmprobe {

// Line transport to a scorer backend. round_trip sends every line and returns
// exactly one response line per request, in request order.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string read_line() = 0;
  virtual std::vector<std::string> round_trip(const std::vector<std::string>& lines) = 0;
  // Brings the backend back after a failure; a fresh handshake line follows.
  virtual void restart() = 0;
};

// Backend launched as `/bin/sh -c <command>` speaking over stdin/stdout.
// Writes and reads are multiplexed with poll(), so a pipelined window never
// deadlocks on full pipe buffers. A stall longer than `timeout` kills the
// child and raises a retryable ProtocolError.
class SubprocessTransport : public Transport {
 public:
  explicit SubprocessTransport(std::string command,
                               std::chrono::milliseconds timeout = std::chrono::minutes(5));
  ~SubprocessTransport() override;
  SubprocessTransport(const SubprocessTransport&) = delete;
  SubprocessTransport& operator=(const SubprocessTransport&) = delete;

  std::string read_line() override;
  std::vector<std::string> round_trip(const std::vector<std::string>& lines) override;
  void restart() override;

 private:
  void start();
  void stop();
  bool take_line(std::string& line);
  [[noreturn]] void fail(const std::string& why);

  std::string command_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string inbox_;
};

// In-process backend: each line is answered by `handler`. Used by tests and
// by the mock scorer.
class LoopbackTransport : public Transport {
 public:
  using Handler = std::function<std::string(std::string_view)>;
  LoopbackTransport(std::string handshake_line, Handler handler);

  std::string read_line() override;
  std::vector<std::string> round_trip(const std::vector<std::string>& lines) override;
  void restart() override;

 private:
  std::string handshake_line_;
  Handler handler_;
  std::deque<std::string> pending_;
};

}  // namespace mlmprobe
