#pragma once

#include <atomic>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "core/audio.hpp"

namespace sblab {

// File-in/file-out contract for the external voice converter. The command
// template is run through /bin/sh with {source}, {target} and {output}
// substituted; exit code 0 plus a readable WAV at {output} means success.
struct VCAdapterConfig {
  std::string command;
  std::string workdir;  // scratch files and the conversion cache live here
  double timeout_s = 60.0;
  int expected_sample_rate = kCanonicalSampleRate;
  int max_parallel = 2;
  std::string adapter_version = "v1";

  void validate() const;
};

// Runs conversions with a content-addressed result cache, so repeated calls
// for the same (source, target, adapter) never re-invoke the external
// command. Safe to share across worker threads.
class VCAdapter {
 public:
  explicit VCAdapter(VCAdapterConfig config);

  // Converted audio at the canonical rate. Paths must exist.
  std::vector<float> convert_file(const std::string& source_path,
                                  const std::string& target_speech_path);

  // Same, for an in-memory waveform (materialized to a scratch WAV first).
  std::vector<float> convert_waveform(const std::vector<float>& waveform,
                                      int sample_rate,
                                      const std::string& target_speech_path);

  // External command executions so far (cache hits do not count).
  int invocation_count() const { return invocations_.load(); }

  const VCAdapterConfig& config() const { return config_; }

  std::string cache_key(const std::string& source_path,
                        const std::string& target_speech_path) const;

 private:
  std::vector<float> run_conversion(const std::string& source_path,
                                    const std::string& target_speech_path,
                                    const std::string& cache_path);

  VCAdapterConfig config_;
  std::atomic<int> invocations_{0};
  std::unique_ptr<std::counting_semaphore<256>> slots_;  // caps parallel runs
};

// One-shot convenience wrapper over a throwaway adapter.
std::vector<float> vc_convert(const std::string& source_path,
                              const std::string& target_speech_path,
                              const VCAdapterConfig& config);

// Runs `command` via /bin/sh with a kill-after deadline. Returns the exit
// code, fills `output_tail` with the last chunk of combined stdout/stderr,
// and reports timeout through `timed_out`.
int run_command_with_timeout(const std::string& command, double timeout_s,
                             std::string* output_tail, bool* timed_out);

}  // namespace sblab
