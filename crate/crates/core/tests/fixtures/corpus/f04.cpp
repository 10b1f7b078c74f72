#include <cstdint>

int highByte(uint16_t x) {
    return x / 256;
}

uint8_t use04(uint16_t x) {
    uint8_t hi = highByte(x);
    return hi;
}
