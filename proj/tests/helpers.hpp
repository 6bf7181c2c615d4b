#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ppl/image.hpp"
#include "ppl/rng.hpp"

namespace ppl::test {

inline Image random_image(std::uint64_t seed, int h, int w, int c) {
  Rng rng(seed);
  Image img(h, w, c);
  for (auto& v : img.data) v = static_cast<float>(rng.unit());
  return img;
}

// Fresh scratch directory under the system temp dir; removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ppl_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the installed CLI binary with the given argument string.
inline CliResult run_cli(const std::string& args,
                         const std::filesystem::path& workdir) {
  const std::filesystem::path out = workdir / "cli_stdout.txt";
  const std::filesystem::path err = workdir / "cli_stderr.txt";
  const std::string cmd = std::string(PPL_CLI_BIN) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.out = read_file(out);
  res.err = read_file(err);
  return res;
}

}  // namespace ppl::test
