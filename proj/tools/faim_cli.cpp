#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "faim/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training churns many short-lived buffers; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return faim::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
