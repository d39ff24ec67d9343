#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace repvec {

class SerializationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Container layout (all integers little-endian):
///   "RPVC" | u32 format version | u32 model type | u64 payload size |
///   payload | u64 FNV-1a checksum of payload
/// Reals are IEEE-754 binary64, matrices row-major.
enum class ModelType : std::uint32_t {
    sdae = 1,
    dbow = 2,
    classifier = 3,
    feature_set = 4,
    representations = 5,
};

inline constexpr std::uint32_t kFormatVersion = 1;

std::string_view to_string(ModelType t);

class ByteWriter {
public:
    void u8(std::uint8_t v) { _buf.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v);
    void str(std::string_view s);
    void f64s(std::span<const double> v);
    void u64s(std::span<const std::uint64_t> v);
    void strings(std::span<const std::string> v);
    void vector(const Eigen::VectorXd &v);
    void matrix(const Eigen::MatrixXd &m);

    const std::string &bytes() const { return _buf; }

private:
    std::string _buf;
};

class ByteReader {
public:
    explicit ByteReader(std::string data) : _buf(std::move(data)) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64();
    std::string str();
    std::vector<double> f64s();
    std::vector<std::uint64_t> u64s();
    std::vector<std::string> strings();
    Eigen::VectorXd vector();
    Eigen::MatrixXd matrix();

    bool at_end() const { return _pos == _buf.size(); }
    /// Throws unless the whole payload was consumed.
    void expect_end() const;

private:
    const char *take(std::size_t n);
    std::size_t count(std::size_t element_size);

    std::string _buf;
    std::size_t _pos = 0;
};

std::string encode_container(ModelType type, const ByteWriter &payload);
ByteReader decode_container(std::string bytes, ModelType expected);

void write_container(const std::filesystem::path &path, ModelType type, const ByteWriter &payload);
ByteReader read_container(const std::filesystem::path &path, ModelType expected);

/// Type tag of a container file without decoding the payload.
ModelType peek_model_type(const std::filesystem::path &path);

} // namespace repvec
