#include "cbct/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cbct/sha256.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace cbct {

bool Checkpoint::has(const std::string& name) const { return index_.count(name) > 0; }

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("checkpoint missing parameter: " + name);
    return entries_[it->second];
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

void Checkpoint::put_entry(Entry e) {
    auto it = index_.find(e.name);
    if (it != index_.end()) {
        entries_[it->second] = std::move(e);
        return;
    }
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << "CBCTCKPT1\n";
    for (const auto& [k, v] : metadata) out << "meta " << k << " " << v << "\n";
    for (const auto& e : entries_) {
        out << "param " << e.name << " " << e.dtype << " " << e.shape.size();
        for (int64_t s : e.shape) out << " " << s;
        out << "\n";
    }
    out << "data\n";
    for (const auto& e : entries_) {
        if (e.dtype == "float32") {
            std::vector<float> buf(e.data.begin(), e.data.end());
            out.write(reinterpret_cast<const char*>(buf.data()),
                      std::streamsize(buf.size() * sizeof(float)));
        } else {
            out.write(reinterpret_cast<const char*>(e.data.data()),
                      std::streamsize(e.data.size() * sizeof(double)));
        }
    }
    if (!out) throw IoError("short write on checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "CBCTCKPT1")
        throw IoError("bad checkpoint magic in " + path);
    Checkpoint ck;
    std::vector<Entry> pending;
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            ck.metadata[key] = value;
        } else if (kind == "param") {
            Entry e;
            size_t rank = 0;
            ls >> e.name >> e.dtype >> rank;
            e.shape.resize(rank);
            for (size_t i = 0; i < rank; ++i) ls >> e.shape[i];
            if (!ls) throw IoError("malformed param line in " + path);
            if (e.dtype != "float32" && e.dtype != "float64")
                throw IoError("unknown dtype " + e.dtype + " in " + path);
            pending.push_back(std::move(e));
        } else {
            throw IoError("unexpected manifest line in " + path + ": " + line);
        }
    }
    for (auto& e : pending) {
        int64_t count = 1;
        for (int64_t s : e.shape) count *= s;
        if (e.dtype == "float32") {
            std::vector<float> buf(count);
            in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(count * sizeof(float)));
            e.data.assign(buf.begin(), buf.end());
        } else {
            e.data.resize(count);
            in.read(reinterpret_cast<char*>(e.data.data()),
                    std::streamsize(count * sizeof(double)));
        }
        if (!in) throw IoError("truncated payload for " + e.name + " in " + path);
        ck.put_entry(std::move(e));
    }
    return ck;
}

std::string Checkpoint::checksum(const std::vector<std::string>& which) const {
    Sha256 h;
    for (const auto& name : which) {
        const Entry& e = entry(name);
        h.update(name);
        if (e.dtype == "float32") {
            std::vector<float> buf(e.data.begin(), e.data.end());
            h.update(buf.data(), buf.size() * sizeof(float));
        } else {
            h.update(e.data.data(), e.data.size() * sizeof(double));
        }
    }
    return h.hex_digest();
}

}  // namespace cbct
