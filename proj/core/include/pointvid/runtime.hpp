#pragma once

namespace pointvid {

/// Keeps large, short-lived tensors on the heap instead of fresh mmap pages (glibc only; a no-op
/// elsewhere). The denoiser allocates several megabyte-sized buffers per pass, and page-faulting
/// them in dominated small-model runtimes. Call once at program start.
void tune_allocator();

}  // namespace pointvid
