#include <cstdint>

int lowByte(uint16_t x) {
    return x & 0xFF;
}

uint8_t use03(uint16_t x) {
    uint8_t b = lowByte(x);
    return b;
}
