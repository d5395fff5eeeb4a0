#include "evalkit/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "evalkit/error.hpp"

namespace evalkit {

namespace {

constexpr std::size_t kStderrCaptureLimit = 64 * 1024;

[[noreturn]] void exec_child(const std::vector<std::string>& argv,
                             const std::string& working_dir, int in_fd,
                             int out_fd, int err_fd) {
  if (!working_dir.empty() && chdir(working_dir.c_str()) != 0) _exit(127);
  dup2(in_fd, 0);
  dup2(out_fd, 1);
  dup2(err_fd, 2);
  // fds above 2 are close-on-exec
  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  execvp(cargv[0], cargv.data());
  _exit(127);
}

void make_cloexec(int fd) { fcntl(fd, F_SETFD, FD_CLOEXEC); }

int open_pipe(int fds[2]) {
  if (pipe(fds) != 0) return -1;
  make_cloexec(fds[0]);
  make_cloexec(fds[1]);
  return 0;
}

}  // namespace

CommandResult run_command(const std::vector<std::string>& argv,
                          const std::string& stdin_text,
                          const std::string& working_dir) {
  if (argv.empty()) raise(ErrorCode::InvalidValue, "empty command");
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (open_pipe(in_pipe) || open_pipe(out_pipe) || open_pipe(err_pipe))
    raise(ErrorCode::IOFailure, "pipe failed");

  pid_t pid = fork();
  if (pid < 0) raise(ErrorCode::IOFailure, "fork failed");
  if (pid == 0)
    exec_child(argv, working_dir, in_pipe[0], out_pipe[1], err_pipe[1]);

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);

  // write stdin fully, then read both outputs to EOF
  std::size_t written = 0;
  signal(SIGPIPE, SIG_IGN);
  while (written < stdin_text.size()) {
    ssize_t n = write(in_pipe[1], stdin_text.data() + written,
                      stdin_text.size() - written);
    if (n <= 0) break;
    written += std::size_t(n);
  }
  close(in_pipe[1]);

  CommandResult result;
  char buf[4096];
  struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  bool open_out = true, open_err = true;
  while (open_out || open_err) {
    fds[0].fd = open_out ? out_pipe[0] : -1;
    fds[1].fd = open_err ? err_pipe[0] : -1;
    if (poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (open_out && (fds[0].revents & (POLLIN | POLLHUP))) {
      ssize_t n = read(out_pipe[0], buf, sizeof(buf));
      if (n <= 0) open_out = false;
      else result.out.append(buf, std::size_t(n));
    }
    if (open_err && (fds[1].revents & (POLLIN | POLLHUP))) {
      ssize_t n = read(err_pipe[0], buf, sizeof(buf));
      if (n <= 0) open_err = false;
      else result.err.append(buf, std::size_t(n));
    }
  }
  close(out_pipe[0]);
  close(err_pipe[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status)
                                       : -(WIFSIGNALED(status) ? WTERMSIG(status) : 1);
  return result;
}

LineProcess::LineProcess(const std::vector<std::string>& argv) {
  if (argv.empty()) raise(ErrorCode::InvalidValue, "empty command");
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (open_pipe(in_pipe) || open_pipe(out_pipe) || open_pipe(err_pipe))
    raise(ErrorCode::IOFailure, "pipe failed");

  pid_t pid = fork();
  if (pid < 0) raise(ErrorCode::IOFailure, "fork failed");
  if (pid == 0) exec_child(argv, "", in_pipe[0], out_pipe[1], err_pipe[1]);

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);
  pid_ = pid;
  stdin_fd_ = in_pipe[1];
  stdout_fd_ = out_pipe[0];
  signal(SIGPIPE, SIG_IGN);
  stderr_thread_ = std::thread([this, fd = err_pipe[0]] { drain_stderr(fd); });
}

LineProcess::~LineProcess() {
  terminate();
  if (stderr_thread_.joinable()) stderr_thread_.join();
  if (stdin_fd_ >= 0) close(stdin_fd_);
  if (stdout_fd_ >= 0) close(stdout_fd_);
}

void LineProcess::drain_stderr(int fd) {
  char buf[4096];
  for (;;) {
    ssize_t n = read(fd, buf, sizeof(buf));
    if (n <= 0) break;
    std::lock_guard<std::mutex> lock(stderr_mutex_);
    if (stderr_capture_.size() < kStderrCaptureLimit)
      stderr_capture_.append(buf, std::size_t(n));
  }
  close(fd);
}

void LineProcess::write_line(const std::string& line) {
  std::string data = line;
  data.push_back('\n');
  std::size_t written = 0;
  while (written < data.size()) {
    ssize_t n = write(stdin_fd_, data.data() + written, data.size() - written);
    if (n <= 0) {
      raise(ErrorCode::ProviderCrash,
            "provider closed its input; stderr: " + stderr_text());
    }
    written += std::size_t(n);
  }
}

std::optional<std::string> LineProcess::read_line(int timeout_ms) {
  for (;;) {
    auto nl = read_buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = read_buffer_.substr(0, nl);
      read_buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (saw_eof_) {
      if (read_buffer_.empty()) return std::nullopt;
      std::string line = std::move(read_buffer_);
      read_buffer_.clear();
      return line;
    }
    struct pollfd pfd{stdout_fd_, POLLIN, 0};
    int rc = poll(&pfd, 1, timeout_ms);
    if (rc == 0)
      raise(ErrorCode::ResponseTimeout,
            "no response within " + std::to_string(timeout_ms) + " ms");
    if (rc < 0) {
      if (errno == EINTR) continue;
      raise(ErrorCode::IOFailure, "poll failed");
    }
    char buf[4096];
    ssize_t n = read(stdout_fd_, buf, sizeof(buf));
    if (n <= 0)
      saw_eof_ = true;
    else
      read_buffer_.append(buf, std::size_t(n));
  }
}

void LineProcess::close_stdin() {
  if (stdin_fd_ >= 0) {
    close(stdin_fd_);
    stdin_fd_ = -1;
  }
}

bool LineProcess::exited() {
  if (exit_code_) return true;
  int status = 0;
  pid_t rc = waitpid(pid_, &status, WNOHANG);
  if (rc == pid_) {
    exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status)
                                   : -(WIFSIGNALED(status) ? WTERMSIG(status) : 1);
    return true;
  }
  return false;
}

int LineProcess::wait() {
  if (exit_code_) return *exit_code_;
  close_stdin();
  int status = 0;
  waitpid(pid_, &status, 0);
  exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status)
                                 : -(WIFSIGNALED(status) ? WTERMSIG(status) : 1);
  return *exit_code_;
}

void LineProcess::terminate() {
  if (!exit_code_ && pid_ > 0) {
    if (!exited()) {
      kill(pid_, SIGKILL);
      wait();
    }
  }
}

std::string LineProcess::stderr_text() {
  std::lock_guard<std::mutex> lock(stderr_mutex_);
  return stderr_capture_;
}

}  // namespace evalkit
