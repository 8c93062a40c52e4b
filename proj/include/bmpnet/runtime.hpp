#pragma once

namespace bmp {

// Keeps large tensor buffers in the heap instead of returning them to the
// OS after every step. Training allocates and frees the same large blocks
// each step, and glibc's default mmap threshold turns that into page faults.
// No-op outside glibc.
void tune_allocator();

}  // namespace bmp
