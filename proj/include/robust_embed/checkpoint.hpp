#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "robust_embed/autograd.hpp"

namespace robust_embed {

struct NamedTensor {
    std::string name;
    Matrix value;
};

// Tensor directory layout:
//   manifest      one line per tensor: "<name> <rows>x<cols> float32"
//   <name>.bin    rows*cols little-endian IEEE-754 float32 values, row-major
void write_tensor_dir(const std::filesystem::path& dir, const std::vector<NamedTensor>& tensors);

// Reads and validates every tensor listed in the manifest before returning
// anything; a missing or truncated file raises an error naming the tensor.
std::vector<NamedTensor> read_tensor_dir(const std::filesystem::path& dir);

// Flat "key=value" text files used for small metadata next to the tensors.
void write_key_values(const std::filesystem::path& file, const std::map<std::string, std::string>& values);
std::map<std::string, std::string> read_key_values(const std::filesystem::path& file);

}  // namespace robust_embed
