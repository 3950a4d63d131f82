#pragma once

#include <ostream>

namespace testra {

// Runs every oracle-equivalence suite (attention form agreement, FIFO window,
// decayed stream vs windowed matrix form, batch/stream parity, tape vs finite
// differences) and prints each suite's max error. Returns true when all pass.
bool selftest(std::ostream& os);

}  // namespace testra
