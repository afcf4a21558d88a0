#include "eva/testing.hpp"

#include <atomic>

namespace eva::testing {

namespace {
std::atomic<Fault> g_fault{Fault::none};
}

void inject_fault(Fault fault) { g_fault.store(fault); }

Fault active_fault() { return g_fault.load(); }

}  // namespace eva::testing
