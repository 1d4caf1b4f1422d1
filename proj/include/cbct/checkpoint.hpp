#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cbct/errors.hpp"
#include "cbct/tensor.hpp"

namespace cbct {

// Single-file parameter store: a text manifest (one line per parameter with
// name, dtype and shape, plus free-form metadata) followed by raw
// little-endian payloads in manifest order.
class Checkpoint {
  public:
    struct Entry {
        std::string name;
        std::string dtype;  // "float32" | "float64"
        std::vector<int64_t> shape;
        std::vector<double> data;  // held widest; converted on put/get
    };

    std::map<std::string, std::string> metadata;

    bool has(const std::string& name) const;
    const Entry& entry(const std::string& name) const;
    std::vector<std::string> names() const;

    template <typename T>
    void put(const std::string& name, const ad::Tensor<T>& t) {
        Entry e;
        e.name = name;
        e.dtype = sizeof(T) == 4 ? "float32" : "float64";
        e.shape = t.shape();
        e.data.assign(t.data().begin(), t.data().end());
        put_entry(std::move(e));
    }

    template <typename T>
    ad::Tensor<T> get(const std::string& name, bool requires_grad = false) const {
        const Entry& e = entry(name);
        std::vector<T> data(e.data.begin(), e.data.end());
        return ad::Tensor<T>::from_data(e.shape, std::move(data), requires_grad);
    }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    // Hash of the named parameters' payload bytes; detects frozen-weight drift.
    std::string checksum(const std::vector<std::string>& which) const;

  private:
    void put_entry(Entry e);
    std::vector<Entry> entries_;
    std::map<std::string, size_t> index_;
};

}  // namespace cbct
