// Secure-world process: hosts the security manager behind the world channel.
#include <CLI11.hpp>
#include <iostream>

#include "ecig/core/clock.hpp"
#include "ecig/core/error.hpp"
#include "ecig/secmgr/security_manager.hpp"
#include "ecig/worldlink/secure_world.hpp"
#include "signals.hpp"

int main(int argc, char** argv) {
  using namespace ecig;
  CLI::App app{"Secure-world security manager", "ecig-secure"};
  std::string config_path, mode;
  app.add_option("--config,-c", config_path, "Secure-world configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--mode", mode, "Override the configured mode")->check(CLI::IsMember({"training", "normal"}));
  CLI11_PARSE(app, argc, argv);

  const sigset_t signals = block_shutdown_signals();
  try {
    auto config = secmgr::SecureConfig::load(config_path);
    if (!mode.empty()) config.mode = worldlink::mode_from_string(mode);

    audit::AuditLog log(config.audit_log, audit::World::SW, system_clock(), config.audit_max_bytes);
    secmgr::SecurityManager sm(config, log);
    secmgr::SecurityManagerTa ta(sm);

    worldlink::SecureWorldOptions options;
    options.endpoint = config.endpoint;
    options.mode = config.mode;
    options.hash = config.hash;
    options.storage_dir = config.storage_dir;
    worldlink::SecureWorldServer server(options, ta, log);
    server.start();
    std::cout << "ready " << config.endpoint << " mode=" << worldlink::to_string(config.mode)
              << std::endl;

    wait_for_shutdown(signals);
    server.stop();
  } catch (const Error& e) {
    std::cerr << "ecig-secure: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
