#include <cstdint>

int negate(int8_t x) {
    return -x;
}

int8_t use15(int8_t x) {
    int8_t n = negate(x);
    return n;
}
