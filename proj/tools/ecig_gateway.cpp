// Normal-world gateway process.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "ecig/core/error.hpp"
#include "ecig/gateway/gateway.hpp"
#include "ecig/worldlink/client.hpp"
#include "signals.hpp"

int main(int argc, char** argv) {
  using namespace ecig;
  CLI::App app{"Edge gateway service", "ecig-gateway"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the REST gateway");
  serve->add_option("--config,-c", config_path)->required()->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Record the gateway image hash (secure world in training mode)");
  train->add_option("--config,-c", config_path)->required()->check(CLI::ExistingFile);

  std::string user, role, password;
  int iterations = 100000;
  auto* hash_user = app.add_subcommand("hash-user", "Print a users-file entry");
  hash_user->add_option("--user", user)->required();
  hash_user->add_option("--role", role)->required()->check(
      CLI::IsMember({"ThirdParty", "Engineer", "Administrator"}));
  hash_user->add_option("--password", password)->required();
  hash_user->add_option("--iterations", iterations)->check(CLI::Range(1000, 10000000));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*hash_user) {
      const auto entry = gateway::UserStore::make_entry(user, *secmgr::role_from_string(role), password,
                                                        iterations);
      std::cout << gateway::UserStore::dump({entry}) << "\n";
      return 0;
    }
    auto config = gateway::GatewayConfig::load(config_path);
    if (*train) {
      if (config.image.empty()) config.image = std::filesystem::read_symlink("/proc/self/exe");
      auto ctx = worldlink::WorldContext::initialize(config.sw_endpoint);
      ctx.train(secmgr::kTrustedAppId, config.image);
      ctx.finalize();
      std::cout << "trained " << config.image.string() << "\n";
      return 0;
    }
    const sigset_t signals = block_shutdown_signals();
    gateway::Gateway gw(config);
    gw.start();
    std::cout << "listening on " << config.listen.substr(0, config.listen.rfind(':')) << ":"
              << gw.port() << std::endl;
    wait_for_shutdown(signals);
    gw.stop();
  } catch (const Error& e) {
    std::cerr << "ecig-gateway: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
