#ifndef GW_UTIL_H
#define GW_UTIL_H

#include "gateway.h"

uint16_t util_checksum16(const uint8_t *data, size_t len);
void util_hexdump(const uint8_t *data, size_t len);
char *util_trim(char *s);
long util_now_ms(void);
int util_scale(int value, int max);
uint16_t util_byteswap(uint16_t v);

#endif
