#include "bmpnet/runtime.hpp"

#include <cstdlib>  // defines __GLIBC__ on glibc systems

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace bmp {

void tune_allocator() {
#if defined(__GLIBC__)
  constexpr int kMmapLimit = 32 << 20;  // the largest value glibc accepts
  constexpr int kTrimLimit = 1 << 30;
  mallopt(M_MMAP_THRESHOLD, kMmapLimit);
  mallopt(M_TRIM_THRESHOLD, kTrimLimit);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace bmp
