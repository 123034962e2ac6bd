#include "evb/tensor.hpp"

#include <cstring>
#include <limits>

#include "evb/error.hpp"
#include "evb/io_util.hpp"

namespace evb {

namespace {

std::size_t element_count(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      throw InvalidArgument("tensor shape overflows");
    }
    n *= d;
  }
  return static_cast<std::size_t>(n);
}

}  // namespace

Tensor::Tensor(std::vector<std::uint64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != f32().size()) {
    throw InvalidArgument("tensor data length does not match shape");
  }
}

Tensor::Tensor(std::vector<std::uint64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != f64().size()) {
    throw InvalidArgument("tensor data length does not match shape");
  }
}

Tensor Tensor::zeros(DType dtype, std::vector<std::uint64_t> shape) {
  const auto n = element_count(shape);
  if (dtype == DType::kF32) return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

DType Tensor::dtype() const {
  return std::holds_alternative<std::vector<float>>(data_) ? DType::kF32 : DType::kF64;
}

std::size_t Tensor::size() const {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

double Tensor::at(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, data_);
}

void Tensor::set(std::size_t i, double value) {
  std::visit(
      [i, value](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        v.at(i) = static_cast<T>(value);
      },
      data_);
}

std::vector<double> Tensor::to_f64() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
                    data_);
}

Tensor parse_tensor(std::string_view bytes, const std::string& file) {
  auto fail = [&](ParseError::Kind kind, std::uint64_t offset, const std::string& msg) {
    throw ParseError(kind, file, offset, std::nullopt, msg);
  };
  if (bytes.size() < kTensorMagic.size() || bytes.substr(0, kTensorMagic.size()) != kTensorMagic) {
    fail(ParseError::Kind::kBadMagic, 0, "missing EVB1TENS magic");
  }
  std::size_t pos = kTensorMagic.size();
  if (bytes.size() < pos + 2) fail(ParseError::Kind::kTruncated, pos, "missing dtype/rank");
  const auto dtype_code = static_cast<std::uint8_t>(bytes[pos]);
  const auto rank = static_cast<std::uint8_t>(bytes[pos + 1]);
  if (dtype_code != static_cast<std::uint8_t>(DType::kF32) &&
      dtype_code != static_cast<std::uint8_t>(DType::kF64)) {
    fail(ParseError::Kind::kInvalidValue, pos, "unknown dtype code " + std::to_string(dtype_code));
  }
  pos += 2;
  if (bytes.size() < pos + 8ull * rank) fail(ParseError::Kind::kTruncated, pos, "truncated shape");
  std::vector<std::uint64_t> shape(rank);
  for (auto& d : shape) {
    std::memcpy(&d, bytes.data() + pos, 8);
    pos += 8;
  }
  const std::size_t elem = dtype_code == static_cast<std::uint8_t>(DType::kF32) ? 4 : 8;
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > (std::numeric_limits<std::uint64_t>::max() / elem) / d) {
      fail(ParseError::Kind::kInvalidValue, kTensorMagic.size() + 2, "shape overflows");
    }
    n *= d;
  }
  const std::uint64_t payload = bytes.size() - pos;
  if (payload != n * elem) {
    fail(ParseError::Kind::kTruncated, pos,
         "payload holds " + std::to_string(payload / elem) + " values (" +
             std::to_string(payload) + " bytes), shape requires " + std::to_string(n));
  }
  if (elem == 4) {
    std::vector<float> data(n);
    std::memcpy(data.data(), bytes.data() + pos, n * 4);
    return Tensor(std::move(shape), std::move(data));
  }
  std::vector<double> data(n);
  std::memcpy(data.data(), bytes.data() + pos, n * 8);
  return Tensor(std::move(shape), std::move(data));
}

std::string serialize_tensor(const Tensor& t) {
  if (t.rank() > 255) throw InvalidArgument("tensor rank exceeds 255");
  std::string out(kTensorMagic);
  out.push_back(static_cast<char>(t.dtype()));
  out.push_back(static_cast<char>(t.rank()));
  for (auto d : t.shape()) out.append(reinterpret_cast<const char*>(&d), 8);
  if (t.dtype() == DType::kF32) {
    out.append(reinterpret_cast<const char*>(t.f32().data()), t.f32().size() * 4);
  } else {
    out.append(reinterpret_cast<const char*>(t.f64().data()), t.f64().size() * 8);
  }
  return out;
}

Tensor read_tensor(const std::filesystem::path& path) {
  return parse_tensor(read_file(path), path.string());
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_tensor(t));
}

}  // namespace evb
