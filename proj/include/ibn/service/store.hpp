#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ibn/errors.hpp"

namespace ibn::service {

/// Append-only JSON-lines file. Each event is written as one line and flushed
/// before the caller updates its in-memory state.
class EventLog {
public:
  EventLog() = default;
  explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path())
      std::filesystem::create_directories(path_.parent_path());
  }

  const std::filesystem::path& path() const { return path_; }

  void append(const nlohmann::json& event) {
    if (!out_.is_open()) {
      out_.open(path_, std::ios::binary | std::ios::app);
      if (!out_)
        throw IoError("cannot open event log " + path_.string());
    }
    out_ << event.dump() << '\n';
    out_.flush();
    if (!out_)
      throw IoError("write failed for " + path_.string());
  }

  /// All complete events in order. A final line without its newline is a torn
  /// write from a crash and is skipped; any other unparsable line is an error.
  std::vector<nlohmann::json> replay() const {
    std::vector<nlohmann::json> out;
    std::ifstream in(path_, std::ios::binary);
    if (!in)
      return out;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0, line_no = 0;
    while (pos < content.size()) {
      const auto nl = content.find('\n', pos);
      if (nl == std::string::npos)
        break;
      ++line_no;
      const std::string_view line(content.data() + pos, nl - pos);
      pos = nl + 1;
      if (line.empty())
        continue;
      try {
        out.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw IoError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return out;
  }

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

using Clock = std::function<std::string()>;

/// UTC wall time as 2024-01-31T12:00:00.123Z.
inline std::string utc_now() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

} // namespace ibn::service
