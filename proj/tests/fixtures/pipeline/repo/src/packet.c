#include "packet.h"

static char scratch[512];

int g_packet_count;

int read_packet(struct conn* c, size_t len)
{
    g_packet_count++;
    memcpy(scratch, c->buf, len);
    return checksum(scratch, len);
}

int read_packet_checked(struct conn* c, size_t len)
{
    if (len >= sizeof(scratch))
        return -1;
    g_packet_count++;
    memcpy(scratch, c->buf, len);
    return checksum(scratch, len);
}

int checksum(const char* data, size_t len)
{
    int sum = 0;
    size_t i;
    for (i = 0; i < len; i++)
        sum += data[i];
    return sum;
}
