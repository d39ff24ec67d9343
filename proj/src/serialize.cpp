#include "repvec/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace repvec {

static_assert(std::endian::native == std::endian::little, "container IO assumes little-endian");

namespace {

constexpr char kMagic[4] = {'R', 'P', 'V', 'C'};
constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8;

std::uint64_t checksum(std::string_view data)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for(unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <class T>
T load_le(const char *p)
{
    T v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

} // namespace

std::string_view to_string(ModelType t)
{
    switch(t) {
    case ModelType::sdae: return "sdae";
    case ModelType::dbow: return "dbow";
    case ModelType::classifier: return "classifier";
    case ModelType::feature_set: return "feature_set";
    case ModelType::representations: return "representations";
    }
    return "unknown";
}

void ByteWriter::u32(std::uint32_t v) { _buf.append(reinterpret_cast<const char *>(&v), sizeof v); }
void ByteWriter::u64(std::uint64_t v) { _buf.append(reinterpret_cast<const char *>(&v), sizeof v); }
void ByteWriter::f64(double v) { _buf.append(reinterpret_cast<const char *>(&v), sizeof v); }

void ByteWriter::str(std::string_view s)
{
    u64(s.size());
    _buf.append(s);
}

void ByteWriter::f64s(std::span<const double> v)
{
    u64(v.size());
    _buf.append(reinterpret_cast<const char *>(v.data()), v.size_bytes());
}

void ByteWriter::u64s(std::span<const std::uint64_t> v)
{
    u64(v.size());
    _buf.append(reinterpret_cast<const char *>(v.data()), v.size_bytes());
}

void ByteWriter::strings(std::span<const std::string> v)
{
    u64(v.size());
    for(const auto &s : v)
        str(s);
}

void ByteWriter::vector(const Eigen::VectorXd &v)
{
    f64s(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

void ByteWriter::matrix(const Eigen::MatrixXd &m)
{
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for(Eigen::Index r = 0; r < m.rows(); ++r)
        for(Eigen::Index c = 0; c < m.cols(); ++c)
            f64(m(r, c));
}

const char *ByteReader::take(std::size_t n)
{
    if(n > _buf.size() - _pos)
        throw SerializationError("payload truncated");
    const char *p = _buf.data() + _pos;
    _pos += n;
    return p;
}

std::size_t ByteReader::count(std::size_t element_size)
{
    const auto n = u64();
    if(element_size && n > (_buf.size() - _pos) / element_size)
        throw SerializationError("payload truncated (element count exceeds remaining bytes)");
    return static_cast<std::size_t>(n);
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(*take(1)); }
std::uint32_t ByteReader::u32() { return load_le<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return load_le<std::uint64_t>(take(8)); }
double ByteReader::f64() { return load_le<double>(take(8)); }

std::string ByteReader::str()
{
    const auto n = count(1);
    return std::string(take(n), n);
}

std::vector<double> ByteReader::f64s()
{
    const auto n = count(8);
    std::vector<double> v(n);
    std::memcpy(v.data(), take(n * 8), n * 8);
    return v;
}

std::vector<std::uint64_t> ByteReader::u64s()
{
    const auto n = count(8);
    std::vector<std::uint64_t> v(n);
    std::memcpy(v.data(), take(n * 8), n * 8);
    return v;
}

std::vector<std::string> ByteReader::strings()
{
    const auto n = count(8);
    std::vector<std::string> v;
    v.reserve(n);
    for(std::size_t i = 0; i < n; ++i)
        v.push_back(str());
    return v;
}

Eigen::VectorXd ByteReader::vector()
{
    const auto v = f64s();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd ByteReader::matrix()
{
    const auto rows = u64();
    const auto cols = u64();
    if(rows && cols > (_buf.size() - _pos) / 8 / rows)
        throw SerializationError("payload truncated (matrix exceeds remaining bytes)");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for(Eigen::Index r = 0; r < m.rows(); ++r)
        for(Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = f64();
    return m;
}

void ByteReader::expect_end() const
{
    if(!at_end())
        throw SerializationError("trailing bytes after payload");
}

std::string encode_container(ModelType type, const ByteWriter &payload)
{
    ByteWriter w;
    std::string out(kMagic, 4);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(type));
    w.u64(payload.bytes().size());
    out += w.bytes();
    out += payload.bytes();
    ByteWriter tail;
    tail.u64(checksum(payload.bytes()));
    out += tail.bytes();
    return out;
}

ByteReader decode_container(std::string bytes, ModelType expected)
{
    if(bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw SerializationError("corrupt header: bad magic tag");
    if(bytes.size() < kHeaderSize)
        throw SerializationError("corrupt header: file truncated");
    const auto version = load_le<std::uint32_t>(bytes.data() + 4);
    if(version != kFormatVersion)
        throw SerializationError("unsupported format version " + std::to_string(version) +
                                 " (expected " + std::to_string(kFormatVersion) + ")");
    const auto type = static_cast<ModelType>(load_le<std::uint32_t>(bytes.data() + 8));
    if(type != expected)
        throw SerializationError("wrong model type: file holds '" + std::string(to_string(type)) +
                                 "', expected '" + std::string(to_string(expected)) + "'");
    const auto size = load_le<std::uint64_t>(bytes.data() + 12);
    if(bytes.size() - kHeaderSize < 8 || size != bytes.size() - kHeaderSize - 8)
        throw SerializationError("corrupt container: file truncated or size mismatch");
    std::string payload = bytes.substr(kHeaderSize, static_cast<std::size_t>(size));
    const auto stored = load_le<std::uint64_t>(bytes.data() + kHeaderSize + size);
    if(stored != checksum(payload))
        throw SerializationError("corrupt container: checksum mismatch");
    return ByteReader(std::move(payload));
}

void write_container(const std::filesystem::path &path, ModelType type, const ByteWriter &payload)
{
    const auto bytes = encode_container(type, payload);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if(!out)
        throw SerializationError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if(!out)
        throw SerializationError("write failed: " + path.string());
}

static std::string slurp(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if(!in)
        throw SerializationError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

ByteReader read_container(const std::filesystem::path &path, ModelType expected)
{
    try {
        return decode_container(slurp(path), expected);
    } catch(const SerializationError &e) {
        throw SerializationError(path.string() + ": " + e.what());
    }
}

ModelType peek_model_type(const std::filesystem::path &path)
{
    const auto bytes = slurp(path);
    if(bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw SerializationError(path.string() + ": corrupt header");
    return static_cast<ModelType>(load_le<std::uint32_t>(bytes.data() + 8));
}

} // namespace repvec
