#include <cstdint>

long long offsetBig(int16_t x) {
    return x * 70000LL;
}

int use12(int16_t x) {
    int big = offsetBig(x);
    return big;
}
