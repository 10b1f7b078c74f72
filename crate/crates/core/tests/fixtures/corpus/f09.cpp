#include <cstdint>

int8_t use09(int16_t x) {
    int8_t v = x;
    return v;
}
