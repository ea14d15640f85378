#pragma once

#include <cstddef>
#include <functional>

namespace vcf {

/// Worker count: `requested` (0 = hardware concurrency), capped by the
/// VCF_THREADS environment variable when set. Always >= 1.
int resolve_jobs(int requested);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. Each index runs exactly
/// once; callers write results into per-index slots so output order never
/// depends on scheduling. If any call throws, the exception from the lowest
/// failing index is rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace vcf
