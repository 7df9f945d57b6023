#include <cstdio>

int main() {
  std::puts("navdiff: wiring in progress");
  return 0;
}
