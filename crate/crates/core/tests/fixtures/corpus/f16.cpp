#include <cstdint>

long long parity(int16_t x) {
    return x & 1;
}

int8_t use16(int16_t x) {
    int8_t p = parity(x);
    return p;
}
