#include "mlmprobe/transport.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "mlmprobe/error.hpp"

namespace mlmprobe {

namespace {

void ignore_sigpipe() {
  struct sigaction action {};
  action.sa_handler = SIG_IGN;
  sigaction(SIGPIPE, &action, nullptr);
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

}  // namespace

SubprocessTransport::SubprocessTransport(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  ignore_sigpipe();
  start();
}

SubprocessTransport::~SubprocessTransport() { stop(); }

void SubprocessTransport::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw ProtocolError("pipe: " + std::string(strerror(errno)), false);
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw ProtocolError("pipe: " + std::string(strerror(errno)), false);
  }
  pid_ = fork();
  if (pid_ < 0) throw ProtocolError("fork: " + std::string(strerror(errno)), false);
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  fcntl(to_child_, F_SETFL, fcntl(to_child_, F_GETFL) | O_NONBLOCK);
  inbox_.clear();
}

void SubprocessTransport::stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks the backend to exit; escalate if it lingers.
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
}

void SubprocessTransport::restart() {
  stop();
  start();
}

void SubprocessTransport::fail(const std::string& why) {
  if (pid_ > 0) kill(pid_, SIGKILL);
  stop();
  throw ProtocolError("scorer backend '" + command_ + "': " + why, true);
}

bool SubprocessTransport::take_line(std::string& line) {
  auto nl = inbox_.find('\n');
  if (nl == std::string::npos) return false;
  line.assign(inbox_, 0, nl);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  inbox_.erase(0, nl + 1);
  return true;
}

std::string SubprocessTransport::read_line() {
  std::string line;
  auto deadline = std::chrono::steady_clock::now() + timeout_;
  char buf[65536];
  while (!take_line(line)) {
    if (from_child_ < 0) fail("not running");
    pollfd pfd{from_child_, POLLIN, 0};
    int ready = poll(&pfd, 1, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) fail("timed out waiting for output");
    ssize_t n = read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail("exited before writing a line");
    inbox_.append(buf, static_cast<std::size_t>(n));
  }
  return line;
}

std::vector<std::string> SubprocessTransport::round_trip(const std::vector<std::string>& lines) {
  std::vector<std::string> responses;
  if (lines.empty()) return responses;
  if (to_child_ < 0 || from_child_ < 0) fail("not running");
  std::string outbox;
  for (const auto& l : lines) outbox.append(l).push_back('\n');
  std::size_t written = 0;
  responses.reserve(lines.size());
  std::string line;
  while (take_line(line)) responses.push_back(std::move(line));

  char buf[65536];
  auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (responses.size() < lines.size()) {
    pollfd pfds[2];
    nfds_t count = 0;
    pfds[count++] = {from_child_, POLLIN, 0};
    if (written < outbox.size()) pfds[count++] = {to_child_, POLLOUT, 0};
    int ready = poll(pfds, count, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) fail(std::string("poll: ") + strerror(errno));
    if (ready == 0) fail("timed out after " + std::to_string(timeout_.count()) + " ms");
    if (count == 2 && (pfds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      ssize_t n = write(to_child_, outbox.data() + written, outbox.size() - written);
      if (n < 0 && errno != EAGAIN && errno != EINTR) fail("write failed: " + std::string(strerror(errno)));
      if (n > 0) {
        written += static_cast<std::size_t>(n);
        deadline = std::chrono::steady_clock::now() + timeout_;
      }
    }
    if (pfds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      ssize_t n = read(from_child_, buf, sizeof buf);
      if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
      if (n <= 0) fail("exited with " + std::to_string(lines.size() - responses.size()) +
                       " responses outstanding");
      inbox_.append(buf, static_cast<std::size_t>(n));
      deadline = std::chrono::steady_clock::now() + timeout_;
      while (responses.size() < lines.size() && take_line(line)) responses.push_back(std::move(line));
    }
  }
  return responses;
}

LoopbackTransport::LoopbackTransport(std::string handshake_line, Handler handler)
    : handshake_line_(std::move(handshake_line)), handler_(std::move(handler)) {
  pending_.push_back(handshake_line_);
}

std::string LoopbackTransport::read_line() {
  if (pending_.empty()) throw ProtocolError("loopback backend has no pending output", false);
  auto line = std::move(pending_.front());
  pending_.pop_front();
  return line;
}

std::vector<std::string> LoopbackTransport::round_trip(const std::vector<std::string>& lines) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(handler_(l));
  return out;
}

void LoopbackTransport::restart() {
  pending_.clear();
  pending_.push_back(handshake_line_);
}

}  // namespace mlmprobe
