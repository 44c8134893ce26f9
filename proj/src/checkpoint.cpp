#include "robust_embed/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace robust_embed {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void write_tensor_dir(const fs::path& dir, const std::vector<NamedTensor>& tensors) {
    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest", std::ios::binary);
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
    for (const auto& t : tensors) {
        if (t.name.empty() || t.name.find_first_of(" \t\n/") != std::string::npos) {
            throw std::invalid_argument("invalid tensor name '" + t.name + "'");
        }
        manifest << t.name << ' ' << t.value.rows() << 'x' << t.value.cols() << " float32\n";
        std::vector<float> buf(static_cast<std::size_t>(t.value.size()));
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.value.data()[i]);
        std::ofstream out(dir / (t.name + ".bin"), std::ios::binary);
        if (!out) throw std::runtime_error("cannot write tensor file for " + t.name);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!out) throw std::runtime_error("short write for tensor " + t.name);
    }
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
}

std::vector<NamedTensor> read_tensor_dir(const fs::path& dir) {
    std::ifstream manifest(dir / "manifest");
    if (!manifest) throw std::runtime_error("missing manifest in " + dir.string());
    std::vector<NamedTensor> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string name, shape, dtype;
        if (!(fields >> name >> shape >> dtype)) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) + " is malformed: '" + line + "'");
        }
        if (dtype != "float32") throw std::runtime_error("tensor " + name + ": unsupported dtype " + dtype);
        const auto x = shape.find('x');
        long rows = -1, cols = -1;
        try {
            if (x == std::string::npos) throw std::invalid_argument("shape");
            rows = std::stol(shape.substr(0, x));
            cols = std::stol(shape.substr(x + 1));
        } catch (const std::exception&) {
            throw std::runtime_error("tensor " + name + ": malformed shape '" + shape + "'");
        }
        if (rows < 0 || cols < 0) throw std::runtime_error("tensor " + name + ": negative shape");
        const fs::path file = dir / (name + ".bin");
        const auto expected = static_cast<std::uintmax_t>(rows) * static_cast<std::uintmax_t>(cols) * sizeof(float);
        if (!fs::exists(file)) {
            throw std::runtime_error("tensor " + name + ": file " + file.filename().string() + " is missing");
        }
        const auto actual = fs::file_size(file);
        if (actual != expected) {
            throw std::runtime_error("tensor " + name + ": expected " + std::to_string(expected) + " bytes, found " +
                                     std::to_string(actual));
        }
        std::vector<float> buf(static_cast<std::size_t>(rows * cols));
        std::ifstream in(file, std::ios::binary);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
        if (!in) throw std::runtime_error("tensor " + name + ": short read");
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = static_cast<double>(buf[i]);
        out.push_back(NamedTensor{name, std::move(m)});
    }
    return out;
}

void write_key_values(const fs::path& file, const std::map<std::string, std::string>& values) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (const auto& [k, v] : values) out << k << '=' << v << '\n';
}

std::map<std::string, std::string> read_key_values(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        values[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return values;
}

}  // namespace robust_embed
