#include <cstdio>

int main() {
  std::puts("microdb: not wired up yet");
  return 2;
}
