#include "mvi/tensor.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace mvi {

void save_npy(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);

  std::ostringstream shape;
  shape << "(";
  for (size_t i = 0; i < t.shape.size(); ++i) shape << t.shape[i] << ", ";
  shape << ")";
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " +
                       shape.str() + ", }";
  // Header (incl. 10-byte preamble) padded with spaces to a multiple of 64,
  // terminated by \n.
  size_t unpadded = 10 + header.size() + 1;
  size_t padded = (unpadded + 63) / 64 * 64;
  header.append(padded - unpadded, ' ');
  header.push_back('\n');

  const char magic[8] = {'\x93', 'N', 'U', 'M', 'P', 'Y', '\x01', '\x00'};
  f.write(magic, 8);
  uint16_t hlen = static_cast<uint16_t>(header.size());
  f.write(reinterpret_cast<const char*>(&hlen), 2);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

Tensor load_npy(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0)
    throw std::runtime_error("not an npy file: " + path);
  uint16_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 2);
  std::string header(hlen, '\0');
  f.read(header.data(), hlen);

  if (header.find("'<f4'") == std::string::npos)
    throw std::runtime_error("unsupported dtype (want <f4): " + path);
  if (header.find("'fortran_order': False") == std::string::npos)
    throw std::runtime_error("fortran-order arrays unsupported: " + path);

  size_t lp = header.find('(');
  size_t rp = header.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos)
    throw std::runtime_error("malformed npy header: " + path);
  std::vector<int64_t> shape;
  std::string dims = header.substr(lp + 1, rp - lp - 1);
  std::istringstream ds(dims);
  std::string tok;
  while (std::getline(ds, tok, ',')) {
    size_t pos = tok.find_first_not_of(" \t");
    if (pos == std::string::npos) continue;
    shape.push_back(std::stoll(tok.substr(pos)));
  }

  Tensor t(shape);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("truncated npy payload: " + path);
  return t;
}

}  // namespace mvi
