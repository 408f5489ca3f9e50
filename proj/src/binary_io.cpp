#include "evsal/binary_io.hpp"

#include <fstream>
#include <iterator>
#include <system_error>

namespace evsal {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

void write_raw_atomic(const std::filesystem::path& path, const char* data,
                      std::size_t size) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::Io, "cannot rename into " + path.string());
  }
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  write_raw_atomic(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_raw_atomic(path, text.data(), text.size());
}

}  // namespace evsal
