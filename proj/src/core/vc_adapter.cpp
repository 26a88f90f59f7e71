#include "core/vc_adapter.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "core/errors.hpp"
#include "core/hash.hpp"

namespace fs = std::filesystem;

namespace sblab {

void VCAdapterConfig::validate() const {
  if (command.empty())
    fail(ErrorCode::invalid_argument, "VC adapter command is empty");
  if (!(timeout_s > 0.0))
    fail(ErrorCode::invalid_argument, "VC adapter timeout must be > 0");
  if (max_parallel < 1)
    fail(ErrorCode::invalid_argument, "VC adapter max_parallel must be >= 1");
}

namespace {

std::string substitute(const std::string& templ, const std::string& key,
                       const std::string& value) {
  std::string out = templ;
  std::string token = "{" + key + "}";
  size_t pos = 0;
  while ((pos = out.find(token, pos)) != std::string::npos) {
    out.replace(pos, token.size(), value);
    pos += value.size();
  }
  return out;
}

std::string read_tail(const std::string& path, size_t max_bytes = 4096) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  in.seekg(0, std::ios::end);
  auto size = static_cast<size_t>(in.tellg());
  size_t keep = std::min(size, max_bytes);
  in.seekg(static_cast<std::streamoff>(size - keep));
  std::string out(keep, '\0');
  in.read(out.data(), static_cast<std::streamsize>(keep));
  return out;
}

}  // namespace

int run_command_with_timeout(const std::string& command, double timeout_s,
                             std::string* output_tail, bool* timed_out) {
  if (timed_out) *timed_out = false;

  std::string log_path =
      (fs::temp_directory_path() /
       ("sblab-cmd-" + to_hex(fnv1a64(command)) + "-" +
        std::to_string(::getpid()) + "-" +
        std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) +
        ".log"))
          .string();

  pid_t pid = ::fork();
  if (pid < 0) fail(ErrorCode::internal, "fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ::dup2(fd, STDOUT_FILENO);
      ::dup2(fd, STDERR_FILENO);
      ::close(fd);
    }
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }

  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::duration<double>(timeout_s);
  int status = 0;
  bool done = false;
  while (!done) {
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      done = true;
      break;
    }
    if (r < 0) fail(ErrorCode::internal, "waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      if (timed_out) *timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  if (output_tail) *output_tail = read_tail(log_path);
  std::error_code ec;
  fs::remove(log_path, ec);

  if (timed_out && *timed_out) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -2;
}

VCAdapter::VCAdapter(VCAdapterConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.workdir.empty())
    config_.workdir = (fs::temp_directory_path() / "sblab-vc").string();
  fs::create_directories(fs::path(config_.workdir) / "cache");
  fs::create_directories(fs::path(config_.workdir) / "tmp");
  slots_ = std::make_unique<std::counting_semaphore<256>>(config_.max_parallel);
}

std::string VCAdapter::cache_key(const std::string& source_path,
                                 const std::string& target_speech_path) const {
  // Keyed on audio content, the command template and the adapter version;
  // mock swaps or upgrades can never serve stale conversions.
  std::string material = file_digest(source_path) + "\x01" +
                         file_digest(target_speech_path) + "\x02" +
                         config_.command + "\x03" + config_.adapter_version;
  return hex_digest128(material);
}

std::vector<float> VCAdapter::convert_file(const std::string& source_path,
                                           const std::string& target_speech_path) {
  if (!fs::exists(source_path))
    fail(ErrorCode::io, "VC source file missing: " + source_path);
  if (!fs::exists(target_speech_path))
    fail(ErrorCode::io, "VC target speech missing: " + target_speech_path);

  std::string key = cache_key(source_path, target_speech_path);
  std::string cache_path =
      (fs::path(config_.workdir) / "cache" / (key + ".wav")).string();
  if (fs::exists(cache_path)) {
    int rate = 0;
    std::vector<float> wave = read_wav(cache_path, &rate);
    if (rate == kCanonicalSampleRate) return wave;
    // Unreadable or stale cache entries fall through to a fresh conversion.
  }
  return run_conversion(source_path, target_speech_path, cache_path);
}

std::vector<float> VCAdapter::convert_waveform(const std::vector<float>& waveform,
                                               int sample_rate,
                                               const std::string& target_speech_path) {
  std::string digest = hex_digest128(
      std::string(reinterpret_cast<const char*>(waveform.data()),
                  waveform.size() * sizeof(float)) +
      std::to_string(sample_rate));
  std::string source_path =
      (fs::path(config_.workdir) / "tmp" / ("src-" + digest + ".wav")).string();
  if (!fs::exists(source_path))
    write_wav_float32(source_path, waveform, sample_rate);
  return convert_file(source_path, target_speech_path);
}

std::vector<float> VCAdapter::run_conversion(const std::string& source_path,
                                             const std::string& target_speech_path,
                                             const std::string& cache_path) {
  std::string output_path = cache_path + ".out-" + std::to_string(::getpid()) +
                            "-" + std::to_string(invocations_.load()) + ".wav";
  std::string command = substitute(config_.command, "source", source_path);
  command = substitute(command, "target", target_speech_path);
  command = substitute(command, "output", output_path);

  slots_->acquire();
  invocations_.fetch_add(1);
  std::string tail;
  bool timed_out = false;
  int exit_code =
      run_command_with_timeout(command, config_.timeout_s, &tail, &timed_out);
  slots_->release();

  if (timed_out) {
    std::error_code ec;
    fs::remove(output_path, ec);
    fail(ErrorCode::timeout,
         "VC adapter timed out after " + std::to_string(config_.timeout_s) +
             "s: " + config_.command);
  }
  if (exit_code != 0) {
    std::error_code ec;
    fs::remove(output_path, ec);
    fail(ErrorCode::trigger, "VC adapter exited with code " +
                                 std::to_string(exit_code) +
                                 (tail.empty() ? "" : "; output: " + tail));
  }

  int rate = 0;
  std::vector<float> wave;
  try {
    wave = read_wav(output_path, &rate);
  } catch (const Error& e) {
    std::error_code ec;
    fs::remove(output_path, ec);
    fail(ErrorCode::trigger,
         std::string("VC adapter produced unreadable audio: ") + e.what());
  }
  std::error_code ec;
  fs::remove(output_path, ec);

  if (rate != kCanonicalSampleRate)
    wave = resample(wave, rate, kCanonicalSampleRate);
  clip_amplitude(wave);

  // Store-through: write to a temp name then rename so concurrent writers of
  // the same key are harmless.
  std::string tmp = cache_path + ".tmp-" + std::to_string(::getpid());
  write_wav_float32(tmp, wave, kCanonicalSampleRate);
  fs::rename(tmp, cache_path, ec);
  return wave;
}

std::vector<float> vc_convert(const std::string& source_path,
                              const std::string& target_speech_path,
                              const VCAdapterConfig& config) {
  VCAdapter adapter(config);
  return adapter.convert_file(source_path, target_speech_path);
}

}  // namespace sblab
