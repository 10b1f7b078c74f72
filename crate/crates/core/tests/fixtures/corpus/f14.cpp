#include <cstddef>
#include <cstdint>

size_t bucket(uint16_t x) {
    return x % 64;
}

int use14(uint16_t x) {
    int slot = bucket(x);
    return slot;
}
