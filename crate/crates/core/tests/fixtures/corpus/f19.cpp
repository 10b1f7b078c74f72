#include <cstdint>

uint8_t use19(uint16_t x) {
    uint8_t v = x;
    return v;
}
