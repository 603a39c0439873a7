#pragma once

// Line protocol for environments running in a subprocess.
//
//   env -> HELLO <rows> <cols> <n_classes>        (once, on startup)
//   RESET <seed>          -> OBS <base64 float32 LE substrates, row-major>
//   ACT <dir 0-8> <fire>  -> STEP <reward> <terminal 0|1>  then  OBS ...
//   QUIT

#include <openssl/evp.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "grusm/env.hpp"
#include "grusm/error.hpp"

namespace grusm {

inline std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<unsigned char> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw EnvError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw EnvError("invalid base64 payload");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string encode_observation(const Observation& obs) {
  static_assert(std::endian::native == std::endian::little, "wire format is little-endian float32");
  std::vector<float> f(obs.cells.begin(), obs.cells.end());
  return base64_encode({reinterpret_cast<const unsigned char*>(f.data()), f.size() * sizeof(float)});
}

inline Observation decode_observation(std::string_view b64, int rows, int cols, int n_classes) {
  const auto bytes = base64_decode(b64);
  Observation obs(rows, cols, n_classes);
  if (bytes.size() != obs.cells.size() * sizeof(float))
    throw EnvError("OBS payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                   std::to_string(obs.cells.size() * sizeof(float)));
  for (std::size_t i = 0; i < obs.cells.size(); ++i) {
    float v;
    std::memcpy(&v, bytes.data() + i * sizeof(float), sizeof(float));
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw EnvError("OBS entries must lie in [0,1]");
    obs.cells[i] = v;
  }
  return obs;
}

// Spawns `command` through /bin/sh and speaks the protocol over its stdio.
class ExternalEnv : public Environment {
 public:
  ExternalEnv(std::string command, int max_steps) : command_(std::move(command)), max_steps_(max_steps) {
    if (max_steps_ <= 0) throw ConfigError("max_steps must be positive");
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw EnvError("pipe() failed");
    pid_ = ::fork();
    if (pid_ < 0) throw EnvError("fork() failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    out_ = ::fdopen(to_child[1], "w");
    in_ = ::fdopen(from_child[0], "r");
    if (!out_ || !in_) throw EnvError("fdopen() failed");

    std::istringstream hello(read_line());
    std::string tag;
    hello >> tag >> info_.rows >> info_.cols >> info_.n_classes;
    if (tag != "HELLO" || !hello || info_.rows <= 0 || info_.cols <= 0 || info_.n_classes < 1 ||
        info_.n_classes > 4)
      throw EnvError("expected 'HELLO <rows> <cols> <n_classes>' with 1-4 classes from " + command_);
    info_.max_steps = max_steps_;
  }

  ExternalEnv(const ExternalEnv&) = delete;
  ExternalEnv& operator=(const ExternalEnv&) = delete;

  ~ExternalEnv() override {
    if (out_) {
      std::fputs("QUIT\n", out_);
      std::fflush(out_);
      std::fclose(out_);
    }
    if (in_) std::fclose(in_);
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  EnvInfo info() const override { return info_; }

  Observation reset(std::uint64_t seed) override {
    send("RESET " + std::to_string(seed));
    started_ = true;
    terminal_ = false;
    return read_obs();
  }

  StepResult step(const Action& action) override {
    if (!started_) throw UsageError("step called before reset");
    if (terminal_) throw UsageError("step called after the episode ended");
    send("ACT " + std::to_string(action.direction) + " " + (action.fire ? "1" : "0"));
    std::istringstream line(read_line());
    std::string tag;
    double reward = 0.0;
    int term = -1;
    line >> tag >> reward >> term;
    if (tag != "STEP" || !line || (term != 0 && term != 1) || !std::isfinite(reward))
      throw EnvError("expected 'STEP <reward> <0|1>'");
    StepResult r{read_obs(), reward, term == 1};
    terminal_ = r.terminal;
    return r;
  }

 private:
  void send(const std::string& line) {
    if (std::fputs((line + "\n").c_str(), out_) < 0 || std::fflush(out_) != 0)
      throw EnvError("environment process closed its input");
  }

  std::string read_line() {
    std::string line;
    int ch;
    while ((ch = std::fgetc(in_)) != EOF && ch != '\n') line.push_back(static_cast<char>(ch));
    if (ch == EOF && line.empty()) throw EnvError("environment process closed its output");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  Observation read_obs() {
    const std::string line = read_line();
    if (line.rfind("OBS ", 0) != 0) throw EnvError("expected 'OBS <base64>'");
    return decode_observation(std::string_view(line).substr(4), info_.rows, info_.cols, info_.n_classes);
  }

  std::string command_;
  int max_steps_;
  pid_t pid_ = -1;
  std::FILE* out_ = nullptr;
  std::FILE* in_ = nullptr;
  EnvInfo info_;
  bool started_ = false;
  bool terminal_ = false;
};

}  // namespace grusm
