#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace evalkit {

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs argv to completion, feeding stdin_text and capturing both streams.
CommandResult run_command(const std::vector<std::string>& argv,
                          const std::string& stdin_text = "",
                          const std::string& working_dir = "");

// Child process spoken to over line-delimited stdin/stdout; stderr is
// drained continuously into a bounded capture buffer.
class LineProcess {
 public:
  explicit LineProcess(const std::vector<std::string>& argv);
  ~LineProcess();

  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;

  // throws ProviderCrash when the child is gone
  void write_line(const std::string& line);
  // nullopt on EOF; throws ResponseTimeout after timeout_ms (< 0: block)
  std::optional<std::string> read_line(int timeout_ms);
  void close_stdin();

  bool exited();
  int wait();              // reaps; returns exit code (or -signal)
  void terminate();        // SIGKILL + reap
  std::string stderr_text();  // captured so far

 private:
  void drain_stderr(int fd);

  int pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string read_buffer_;
  bool saw_eof_ = false;
  std::optional<int> exit_code_;
  std::thread stderr_thread_;
  std::mutex stderr_mutex_;
  std::string stderr_capture_;
};

}  // namespace evalkit
