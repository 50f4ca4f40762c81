#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace chorus::io {

// Little-endian primitives. x86 hosts write through memcpy; the explicit
// byte order is part of both file formats.
void write_u16(std::ostream& os, uint16_t v);
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
uint16_t read_u16(std::istream& is, const std::string& ctx);
uint32_t read_u32(std::istream& is, const std::string& ctx);
uint64_t read_u64(std::istream& is, const std::string& ctx);
float read_f32(std::istream& is, const std::string& ctx);
double read_f64(std::istream& is, const std::string& ctx);
void write_f32_array(std::ostream& os, const float* data, size_t n);
void read_f32_array(std::istream& is, float* data, size_t n, const std::string& ctx);

std::ifstream open_input(const std::string& path);
std::ofstream open_output(const std::string& path);

// Checkpoint container: "DCKP", u32 version=1, u32 count, then per tensor
// u16 name length, name, u8 rank, u64 dims[rank], f32 data row-major.
struct NamedTensor {
    std::string name;
    std::vector<long> dims;
    std::vector<float> data;
};

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

// Flat key = value config text used for model configs.
std::map<std::string, std::string> parse_kv(const std::string& text);
std::string serialize_kv(const std::map<std::string, std::string>& kv);

// Split a line on a delimiter; keeps empty fields.
std::vector<std::string> split(const std::string& line, char delim);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace chorus::io
