#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace evb {

/// On-disk dtype codes of the .evbt format.
enum class DType : std::uint8_t { kF32 = 1, kF64 = 2 };

/// Dense row-major tensor as stored in .evbt files:
///   "EVB1TENS" | u8 dtype | u8 rank | u64 dims[rank] | payload (little-endian)
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::uint64_t> shape, std::vector<float> data);
  Tensor(std::vector<std::uint64_t> shape, std::vector<double> data);

  static Tensor zeros(DType dtype, std::vector<std::uint64_t> shape);

  DType dtype() const;
  const std::vector<std::uint64_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::uint64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const;

  /// Element i of the flattened payload, widened to double.
  double at(std::size_t i) const;
  void set(std::size_t i, double v);
  std::vector<double> to_f64() const;

  const std::vector<float>& f32() const { return std::get<std::vector<float>>(data_); }
  const std::vector<double>& f64() const { return std::get<std::vector<double>>(data_); }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::uint64_t> shape_;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

constexpr std::string_view kTensorMagic = "EVB1TENS";

Tensor parse_tensor(std::string_view bytes, const std::string& file = {});
std::string serialize_tensor(const Tensor& t);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const Tensor& t, const std::filesystem::path& path);

}  // namespace evb
