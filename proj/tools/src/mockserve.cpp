#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "mils/cli.hpp"
#include "mils/errors.hpp"
#include "mils/mock_server.hpp"

namespace mils::cli {

namespace fs = std::filesystem;

int cmd_mockserve(int port, const fs::path& script_path, const std::optional<fs::path>& log_path, std::ostream& err,
                  const std::atomic<bool>& stop, const std::function<void(int)>& on_ready) {
  nlohmann::json script;
  {
    std::ifstream in(script_path);
    if (!in) {
      err << "cannot read script " << script_path.string() << "\n";
      return kExitFailure;
    }
    try {
      script = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      err << "invalid script: " << e.what() << "\n";
      return kExitFailure;
    }
  }

  std::ofstream log;
  MockServer server;
  try {
    install_script(server, script, fs::absolute(script_path).parent_path());
    if (log_path) {
      log.open(*log_path, std::ios::app);
      if (!log) throw IoError("cannot open log " + log_path->string());
      server.set_log_stream(&log);
    }
    port = server.start(port);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kExitFailure;
  }
  spdlog::info("mock backend listening on {}", server.base_url());
  if (on_ready) on_ready(port);
  while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  server.stop();
  return kExitOk;
}

}  // namespace mils::cli
