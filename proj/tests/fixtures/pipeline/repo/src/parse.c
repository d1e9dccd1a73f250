#include "packet.h"

static const char* k_magic = "PKT1";

int parse_header(const char* buf, size_t n)
{
    char tmp[64];
    if (n > sizeof(tmp))
        return -1;
    memcpy(tmp, buf, n);
    return tmp[0] == k_magic[0];
}

int parse_header_legacy(const char* buf)
{
    char tmp[64];
    strcpy(tmp, buf);
    return tmp[0];
}

int dispatch(struct conn* c, const char* buf, size_t n)
{
    if (parse_header(buf, n) < 0)
        return -1;
    return read_packet(c, n);
}
