#include <cstdint>

int level(uint8_t x) {
    return x / 32;
}

int8_t use20(uint8_t x) {
    int raw = level(x);
    int8_t lv = raw;
    return lv;
}
