#include "io.hpp"

#include <cstring>
#include <sstream>

namespace chorus::io {

namespace {

template <class T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    // host is little-endian; a big-endian port would reorder here
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is, const std::string& ctx) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw FormatError(ctx + ": truncated at byte offset " +
                               std::to_string(static_cast<long>(is.tellg())));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

} // namespace

void write_u16(std::ostream& os, uint16_t v) { write_le(os, v); }
void write_u32(std::ostream& os, uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, uint64_t v) { write_le(os, v); }
void write_f32(std::ostream& os, float v) { write_le(os, v); }
void write_f64(std::ostream& os, double v) { write_le(os, v); }
uint16_t read_u16(std::istream& is, const std::string& ctx) { return read_le<uint16_t>(is, ctx); }
uint32_t read_u32(std::istream& is, const std::string& ctx) { return read_le<uint32_t>(is, ctx); }
uint64_t read_u64(std::istream& is, const std::string& ctx) { return read_le<uint64_t>(is, ctx); }
float read_f32(std::istream& is, const std::string& ctx) { return read_le<float>(is, ctx); }
double read_f64(std::istream& is, const std::string& ctx) { return read_le<double>(is, ctx); }

void write_f32_array(std::ostream& os, const float* data, size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void read_f32_array(std::istream& is, float* data, size_t n, const std::string& ctx) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
    if (!is) throw FormatError(ctx + ": truncated data block");
}

std::ifstream open_input(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return is;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path);
    return os;
}

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    auto os = open_output(path);
    os.write("DCKP", 4);
    write_u32(os, 1);
    write_u32(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xffff)
            throw UsageError("checkpoint: tensor name too long");
        write_u16(os, static_cast<uint16_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        os.put(static_cast<char>(t.dims.size()));
        size_t n = 1;
        for (long d : t.dims) {
            write_u64(os, static_cast<uint64_t>(d));
            n *= static_cast<size_t>(d);
        }
        if (n != t.data.size())
            throw UsageError("checkpoint: dims do not match data for " + t.name);
        write_f32_array(os, t.data.data(), n);
    }
    if (!os) throw FormatError("checkpoint: write failed for " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    auto is = open_input(path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DCKP", 4) != 0)
        throw FormatError(path + ": bad checkpoint magic");
    const uint32_t version = read_u32(is, path);
    if (version != 1)
        throw FormatError(path + ": unsupported checkpoint version " +
                          std::to_string(version));
    const uint32_t count = read_u32(is, path);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const uint16_t len = read_u16(is, path);
        t.name.resize(len);
        is.read(t.name.data(), len);
        if (!is) throw FormatError(path + ": truncated tensor name");
        const int rank = is.get();
        if (rank < 0) throw FormatError(path + ": truncated rank");
        size_t n = 1;
        for (int r = 0; r < rank; ++r) {
            const uint64_t d = read_u64(is, path);
            if (d == 0 || d > (1ull << 32))
                throw FormatError(path + ": bad dim in " + t.name);
            t.dims.push_back(static_cast<long>(d));
            n *= static_cast<size_t>(d);
        }
        t.data.resize(n);
        read_f32_array(is, t.data.data(), n, path);
        out.push_back(std::move(t));
    }
    return out;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        auto trim = [](std::string s) {
            const char* ws = " \t\r";
            s.erase(0, s.find_first_not_of(ws));
            auto e = s.find_last_not_of(ws);
            s.erase(e == std::string::npos ? 0 : e + 1);
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string serialize_kv(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string read_text_file(const std::string& path) {
    auto is = open_input(path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    auto os = open_output(path);
    os << content;
    if (!os) throw FormatError("write failed for " + path);
}

} // namespace chorus::io
