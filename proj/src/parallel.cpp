#include "aphi/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

#include "aphi/errors.hpp"

namespace aphi {

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("ANDERSON_PHI42_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError("ANDERSON_PHI42_WORKERS must be a positive integer", "workers");
        return int(v);
    }
    return 1;
}

void parallel_chunks(int chunks, int workers, const std::function<void(int)>& task) {
    if (chunks <= 0) return;
    workers = std::max(1, std::min(workers, chunks));
    if (workers == 1) {
        for (int c = 0; c < chunks; ++c) task(c);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(chunks);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int c = next++; c < chunks; c = next++) {
                try {
                    task(c);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace aphi
