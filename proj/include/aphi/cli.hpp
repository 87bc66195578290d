#pragma once

namespace aphi {

// Exit codes: 0 success, 1 a check failed, 2 configuration or input error, 3 numerical failure.
int run(int argc, const char* const* argv);

}  // namespace aphi
