#include "tpp/io_bytes.hpp"

#include <fstream>
#include <iterator>

namespace tpp {

std::vector<unsigned char> read_file(const std::filesystem::path& path,
                                     std::size_t limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: cannot open " + path.string());
  std::vector<unsigned char> bytes;
  if (limit == 0) {
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  } else {
    bytes.resize(limit);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(limit));
    bytes.resize(static_cast<std::size_t>(in.gcount()));
  }
  if (in.bad()) throw DataError("I/O failure reading " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("I/O failure: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("I/O failure writing " + path.string());
}

}  // namespace tpp
