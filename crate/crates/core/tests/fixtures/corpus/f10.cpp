#include <cstdint>

int64_t ticks(uint8_t x) {
    return static_cast<int64_t>(x) * 1000;
}

int use10(uint8_t x) {
    int ms = ticks(x);
    return ms;
}
