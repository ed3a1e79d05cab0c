#include <cstring>
#include <vector>

namespace net {

class Buffer : public Base {
public:
    explicit Buffer(size_t n) : data_(n), size_{n} {}
    void append(const char* src, size_t len);
    size_t size() const { return size_; }
private:
    std::vector<char> data_;
    size_t size_;
};

void Buffer::append(const char* src, size_t len) {
    grow(len);
    std::memcpy(data_.data() + size(), src, len);
}

static void grow(size_t n) {
    if (n > 0) log_growth(n);
}

static void log_growth(size_t n) {
    if (n > 1024) grow(n / 2);
}

}  // namespace net

int parse_packet(const char* raw, size_t len) {
    net::Buffer buf(len);
    buf.append(raw, len);
    auto check = [&](int x) { return validate(x); };
    return check(static_cast<int>(buf.size()));
}

int validate(int x) { return x > 0 ? x : 0; }
