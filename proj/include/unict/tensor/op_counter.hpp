#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace unict::tensor {

/// Multiply-accumulate tally keyed by op kind. Ops executed while a
/// CountScope is alive on the current thread add their forward MACs here.
struct OpCounter {
  std::uint64_t total = 0;
  std::map<std::string, std::uint64_t> by_op;

  void add(const std::string& op, std::uint64_t macs) {
    total += macs;
    by_op[op] += macs;
  }
  std::uint64_t get(const std::string& op) const {
    auto it = by_op.find(op);
    return it == by_op.end() ? 0 : it->second;
  }
  void merge(const OpCounter& other) {
    for (const auto& [op, n] : other.by_op) add(op, n);
  }

  friend bool operator==(const OpCounter&, const OpCounter&) = default;
};

class CountScope {
 public:
  explicit CountScope(OpCounter& counter);
  ~CountScope();
  CountScope(const CountScope&) = delete;
  CountScope& operator=(const CountScope&) = delete;

 private:
  OpCounter* previous_;
};

/// Records into the active counter, if any.
void count_macs(const char* op, std::uint64_t macs);

}  // namespace unict::tensor
