#include "limtr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "limtr/nn.hpp"

namespace limtr {

namespace {

constexpr char kMagic[5] = {'L', 'I', 'M', 'T', 'R'};

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

    void need(size_t n, const char* what) {
        if (pos_ + n > bytes_.size())
            throw std::runtime_error("checkpoint parse error at byte offset " +
                                     std::to_string(pos_) + ": truncated " + what);
    }

    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<uint8_t>(bytes_[pos_ + static_cast<size_t>(i)]);
        pos_ += 4;
        return v;
    }

    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    float f32(const char* what) {
        uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

private:
    std::string bytes_;
    size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::string out;
    out.append(kMagic, 5);
    put_u32(out, kCheckpointVersion);
    for (const auto& e : entries) {
        put_u32(out, static_cast<uint32_t>(e.name.size()));
        out.append(e.name);
        put_u32(out, static_cast<uint32_t>(e.dims.size()));
        size_t numel = 1;
        for (uint32_t d : e.dims) {
            put_u32(out, d);
            numel *= d;
        }
        if (numel != e.data.size())
            throw std::invalid_argument("checkpoint entry " + e.name + ": dims/data mismatch");
        for (float v : e.data) put_f32(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes));

    const std::string magic = r.str(5, "magic");
    if (std::memcmp(magic.data(), kMagic, 5) != 0)
        throw std::runtime_error("checkpoint parse error at byte offset 0: bad magic");
    const uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint version mismatch: file has " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));

    std::vector<CheckpointEntry> entries;
    while (!r.at_end()) {
        CheckpointEntry e;
        const uint32_t name_len = r.u32("name length");
        e.name = r.str(name_len, "name");
        const uint32_t rank = r.u32("rank");
        size_t numel = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            e.dims.push_back(r.u32("dimension"));
            numel *= e.dims.back();
        }
        e.data.reserve(numel);
        for (size_t i = 0; i < numel; ++i) e.data.push_back(r.f32("payload"));
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<CheckpointEntry> params_to_entries(const ParamStore& store) {
    std::vector<CheckpointEntry> entries;
    entries.reserve(store.params.size());
    for (const auto& p : store.params) {
        CheckpointEntry e;
        e.name = p->name;
        for (size_t d : p->value.shape) e.dims.push_back(static_cast<uint32_t>(d));
        e.data.reserve(p->value.numel());
        for (double v : p->value.data) e.data.push_back(static_cast<float>(v));
        entries.push_back(std::move(e));
    }
    return entries;
}

void load_params(ParamStore& store, const std::vector<CheckpointEntry>& entries) {
    std::string problems;
    for (auto& p : store.params) {
        const CheckpointEntry* found = nullptr;
        for (const auto& e : entries)
            if (e.name == p->name) {
                found = &e;
                break;
            }
        if (!found) {
            problems += (problems.empty() ? "" : ", ") + p->name + " (missing)";
            continue;
        }
        bool shape_ok = found->dims.size() == p->value.shape.size();
        if (shape_ok)
            for (size_t i = 0; i < found->dims.size(); ++i)
                shape_ok = shape_ok && found->dims[i] == p->value.shape[i];
        if (!shape_ok || found->data.size() != p->value.numel()) {
            problems += (problems.empty() ? "" : ", ") + p->name + " (shape mismatch)";
            continue;
        }
        for (size_t i = 0; i < found->data.size(); ++i)
            p->value.data[i] = static_cast<double>(found->data[i]);
    }
    if (!problems.empty())
        throw std::runtime_error("checkpoint does not match model parameters: " + problems);
}

}  // namespace limtr
