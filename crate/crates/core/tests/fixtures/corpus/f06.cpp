#include <cstdint>

long wrapPercent(int16_t x) {
    return x % 101;
}

int8_t use06(int16_t x) {
    int8_t pct = wrapPercent(x);
    return pct;
}
