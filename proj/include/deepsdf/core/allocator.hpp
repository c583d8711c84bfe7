#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace deepsdf {

/**
 * Training allocates and frees panel-sized activation buffers every epoch.
 * Raising glibc's mmap/trim thresholds keeps those blocks on the heap for
 * reuse instead of returning them to the kernel each time. Call once at
 * program start; no-op on other C libraries.
 */
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace deepsdf
