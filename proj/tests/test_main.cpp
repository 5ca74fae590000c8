#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "rmt/experiments.hpp"

#include <cstdio>

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  rmt::configure_threads(1);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
