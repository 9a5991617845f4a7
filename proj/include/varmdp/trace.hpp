#pragma once

namespace varmdp {

// One outer-loop record: the level the iteration worked at, the inner solve's
// optimal gain there, how many inner rounds it took, and wall time.
struct TraceEntry {
  int k = 0;
  double lambda_k = 0.0;
  double inner_value = 0.0;
  int inner_iterations = 0;
  double millis = 0.0;
};

}  // namespace varmdp
