// Simulated PLC fleet.
#include <CLI11.hpp>
#include <iostream>
#include <memory>
#include <vector>

#include "ecig/core/error.hpp"
#include "ecig/plcsim/sim_asset.hpp"
#include "signals.hpp"

int main(int argc, char** argv) {
  using namespace ecig;
  CLI::App app{"Modbus-TCP PLC simulator", "ecig-plcsim"};
  std::string config_path;
  app.add_option("--config,-c", config_path, "Fleet configuration")->required()->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  const sigset_t signals = block_shutdown_signals();
  std::vector<std::unique_ptr<plcsim::SimAsset>> fleet;
  try {
    for (auto& c : plcsim::load_fleet(config_path)) {
      fleet.push_back(std::make_unique<plcsim::SimAsset>(std::move(c)));
      fleet.back()->start();
      std::cout << "asset " << fleet.back()->asset_id() << " on " << fleet.back()->endpoint()
                << std::endl;
    }
  } catch (const Error& e) {
    std::cerr << "ecig-plcsim: " << e.what() << "\n";
    return 1;
  }
  wait_for_shutdown(signals);
  for (auto& a : fleet) a->stop();
  return 0;
}
