#include "util.h"

#include <ctype.h>
#include <stdio.h>
#include <string.h>
#include <time.h>

uint16_t util_checksum16(const uint8_t *data, size_t len)
{
    uint32_t sum = 0;
    size_t i;

    for (i = 0; i < len; i++)
        sum += data[i];
    while (sum >> 16)
        sum = (sum & 0xffff) + (sum >> 16);
    return (uint16_t)~sum;
}

void util_hexdump(const uint8_t *data, size_t len)
{
    size_t i;

    for (i = 0; i < len; i++) {
        printf("%02x%c", data[i], (i + 1) % 16 == 0 ? '\n' : ' ');
    }
    if (len % 16 != 0)
        printf("\n");
}

char *util_trim(char *s)
{
    char *end;

    while (isspace((unsigned char)*s))
        s++;
    end = s + strlen(s);
    while (end > s && isspace((unsigned char)end[-1]))
        end--;
    *end = '\0';
    return s;
}

long util_now_ms(void)
{
    struct timespec ts;

    clock_gettime(CLOCK_MONOTONIC, &ts);
    return ts.tv_sec * 1000L + ts.tv_nsec / 1000000L;
}

static int detail_clamp(int v, int lo, int hi)
{
    if (v < lo)
        return lo;
    if (v > hi)
        return hi;
    return v;
}

int util_scale(int value, int max)
{
    if (max <= 0)
        return 0;
    return detail_clamp(value * 100 / max, 0, 100);
}

#if defined(GW_BIG_ENDIAN)

uint16_t util_byteswap(uint16_t v)
{
    return v;
}

#else

uint16_t util_byteswap(uint16_t v)
{
    return (uint16_t)((v << 8) | (v >> 8));
}

#endif
