#pragma once

#include <functional>

namespace bsde {

/// Process-wide worker count for batch-parallel loops (0 = hardware concurrency).
void set_thread_count(int threads);
int thread_count();

/// Runs body(i) for i in [0, n). Iterations are split into contiguous chunks
/// across threads; callers write results into per-index slots and reduce them
/// afterwards in index order, so output never depends on the schedule.
void parallel_for(int n, const std::function<void(int)>& body);

/// Same chunking as parallel_for, but hands each worker its whole range
/// [begin, end) so per-thread scratch can be set up once.
void parallel_chunks(int n, const std::function<void(int, int)>& body);

}  // namespace bsde
