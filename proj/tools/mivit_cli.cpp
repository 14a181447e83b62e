// Placeholder entry point; subcommands land together with the trainer.
#include <cstdio>

int main() {
  std::puts("mivit: no subcommand given");
  return 2;
}
