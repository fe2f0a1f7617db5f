#pragma once

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testutil {

inline std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

inline std::string data_dir() { return env_or("UGMM_DATA_DIR", "data"); }
inline std::string config_dir() { return env_or("UGMM_CONFIG_DIR", "configs"); }
inline std::string cli_path() { return env_or("UGMM_CLI", "./ugmm"); }

/// Fresh unique directory under the system temp root.
inline std::filesystem::path make_temp_dir(const std::string& tag) {
    static int counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    std::filesystem::path dir;
    do {
        dir = base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    } while (std::filesystem::exists(dir));
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

/// Run the CLI binary with the given argument string; captures combined
/// output and the exit code.
inline CliResult run_cli(const std::string& args) {
    CliResult res;
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return res;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        res.output.append(buf.data(), n);
    }
    const int status = ::pclose(pipe);
    if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
    return res;
}

}  // namespace testutil
