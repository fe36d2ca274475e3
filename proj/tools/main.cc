#include <csignal>
#include <iostream>

#include "commands.h"

namespace {

std::atomic<bool> g_stop{false};

void OnSignal(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  return tagtrace::cli::RunCli(argc, argv, std::cout, std::cerr, g_stop);
}
