#pragma once

namespace mkv {

/// Worker count for parallel loops. MKV_THREADS (a positive integer) fixes
/// the pool size; otherwise the OpenMP default is used. Results never depend
/// on this value.
int worker_count();

}  // namespace mkv
