#include <cstdint>

long long offsetBy(int8_t x) {
    return x - 200LL;
}

short use11(int8_t x) {
    short off = offsetBy(x);
    return off;
}
