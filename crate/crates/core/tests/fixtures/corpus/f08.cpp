#include <cstdint>

long long sumDigits(uint8_t x) {
    return x / 100 + (x / 10) % 10 + x % 10;
}

short use08(uint8_t x) {
    short s = sumDigits(x);
    return s;
}
